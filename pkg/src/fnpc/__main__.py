from fnpc.cli import main

main()
