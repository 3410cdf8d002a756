from contagion_lab.cli import main

raise SystemExit(main())
