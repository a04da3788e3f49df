"""Config parsing, CSV export and run manifests."""
