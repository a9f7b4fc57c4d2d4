from mart.cli import main

main()
