"""Steerable neural ODEs on homogeneous spaces G/H.

The main entry points are :class:`~steerable_node.transport.SteerableModel`
with :func:`~steerable_node.transport.run_steerable_node`, the connection
constructors in :mod:`steerable_node.connection`, and the checks in
:mod:`steerable_node.equivariance`.
"""
from .bundle import BasePoint, SectionChart, get_quotient, quotient_for
from .connection import ConnectionForm, WangMap, coefficient_connection, wang_check, wang_connection
from .features import ROT2, TRIVIAL, MackeyFunction, Representation, weighted
from .fields import ConstantField, FunctionField, NetField, RotationField, zero_field
from .groups import R1, R2, SO2, SO3, U1, AlgebraElement, GroupElement, GroupSpec, R2xU1
from .transport import SteerableModel, TransportResult, run_batch, run_steerable_node

__version__ = "0.1.0"

__all__ = [
    "BasePoint", "SectionChart", "get_quotient", "quotient_for",
    "ConnectionForm", "WangMap", "coefficient_connection", "wang_check", "wang_connection",
    "ROT2", "TRIVIAL", "MackeyFunction", "Representation", "weighted",
    "ConstantField", "FunctionField", "NetField", "RotationField", "zero_field",
    "R1", "R2", "SO2", "SO3", "U1", "R2xU1", "AlgebraElement", "GroupElement", "GroupSpec",
    "SteerableModel", "TransportResult", "run_batch", "run_steerable_node",
]
