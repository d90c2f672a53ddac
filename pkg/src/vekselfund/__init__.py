"""Risk toolkit for municipal microloans guaranteed by payable-on-presentation notes."""

from vekselfund.money import Money, Rate, Share, apply_fraction, apply_rate

__all__ = ["Money", "Rate", "Share", "apply_fraction", "apply_rate"]
__version__ = "0.1.0"
