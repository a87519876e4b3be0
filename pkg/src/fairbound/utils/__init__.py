"""Configuration, artifact and command-line helpers shared by the commands."""
