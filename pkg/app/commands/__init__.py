"""
Command-line subcommands, one module per verification suite.
"""
