from graphgear.cli import main

main()
