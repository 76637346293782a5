"""Subgroup identification: VG, VT and Gi."""
