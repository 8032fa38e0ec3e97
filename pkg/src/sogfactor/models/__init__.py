from .direct import DecodeError, DirectLayout, compile_direct, decode_direct
from ._columns import encode_bit_product

from .congruence import (
    VARIANTS,
    CongruenceLayout,
    CongruenceParams,
    CongruenceRelation,
    QuadraticLayout,
    Rejection,
    choose_xbar,
    compile_congruence,
    compile_quadratic_reference,
    decode_congruence,
    decode_quadratic,
    make_relation,
    xbar_window,
)

__all__ = [
    "VARIANTS",
    "CongruenceLayout",
    "CongruenceParams",
    "CongruenceRelation",
    "DecodeError",
    "DirectLayout",
    "QuadraticLayout",
    "Rejection",
    "choose_xbar",
    "compile_congruence",
    "compile_direct",
    "compile_quadratic_reference",
    "decode_congruence",
    "decode_direct",
    "decode_quadratic",
    "encode_bit_product",
    "make_relation",
    "xbar_window",
]
