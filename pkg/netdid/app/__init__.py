"""
Estimation, variance and simulation modules for network-interference DID.
"""
