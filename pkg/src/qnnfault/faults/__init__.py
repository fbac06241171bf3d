"""Bit address spaces, SEU/MBU primitives, schedules and the bit-search attack."""
from .address import BitAddressSpace, build_address_space, flip_bit, inject_mbu
from .attack import AttackBudget, AttackResult, bit_search_attack
from .schedule import (FaultEvent, FaultSchedule, Injection, apply_due_events, schedule_in_layer,
                       schedule_uniform)
