"""Domain logic: data model, losses, networks, fusion, metrics and the clinical score."""
