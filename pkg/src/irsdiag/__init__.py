"""IRS fault diagnosis under three channel-knowledge regimes."""
