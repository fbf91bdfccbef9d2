"""
Cotations d'escalade - inférence de la pente des échelles à partir de carnets
"""
__version__ = "1.0.0"
