"""HTTP portal over engine/repository/bridge plus the command-line client."""
