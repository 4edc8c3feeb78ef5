from billprep.cli import main

main()
