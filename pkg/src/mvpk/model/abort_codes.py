"""Abort codes for implicit (runtime-generated) aborts.

These are shared between the interpreter, the explicit-abort rewriting and
the verification-condition encoding, so that replayed counterexamples agree
with interpreted executions bit for bit.
"""

ARITHMETIC = 2001       # overflow, underflow, division or modulo by zero
MISSING_DATA = 2002     # borrow_global / move_from on an absent resource
ALREADY_EXISTS = 2003   # move_to on an occupied location
