"""The 12-case verdict rule table shared by the unit and acceptance suites.

Each row: (facts, expected conclusion, name of the rule expected to fire).
Incomplete equilibrium lists (equilibria_complete=False) model flows whose
zeros are known to be finite in number but not fully enumerated.
"""

from flowlin.obstruct import NO_OBSTRUCTION, NOT_LINEARIZABLE, SystemFacts

SPHERE_FACTS = SystemFacts(
    dim=2, equilibrium_indices=(1, 1), surface_type="sphere", euler_characteristic=2
)

VERDICT_TABLE = [
    (SystemFacts(dim=3, equilibrium_indices=(1,)), NOT_LINEARIZABLE, "odd_dimension"),
    (SystemFacts(dim=5, equilibrium_indices=(1, 1, 1), equilibria_complete=False),
     NOT_LINEARIZABLE, "odd_dimension"),
    (SPHERE_FACTS, NO_OBSTRUCTION, None),
    (SystemFacts(dim=2, surface_type="genus_2_orientable", euler_characteristic=-2,
                 equilibria_complete=False), NOT_LINEARIZABLE, "euler_characteristic"),
    (SystemFacts(dim=2, surface_type="torus", euler_characteristic=0),
     NO_OBSTRUCTION, None),
    (SystemFacts(dim=2, surface_type="klein_bottle", euler_characteristic=0),
     NO_OBSTRUCTION, None),
    (SystemFacts(dim=2, equilibrium_indices=(1,), surface_type="projective_plane",
                 euler_characteristic=1), NO_OBSTRUCTION, None),
    (SystemFacts(dim=2, equilibrium_indices=(-1,), equilibria_complete=False),
     NOT_LINEARIZABLE, "hopf_index"),
    (SystemFacts(dim=2, equilibrium_indices=(1, 1), surface_type="genus_2_orientable",
                 equilibria_complete=False), NOT_LINEARIZABLE, "surface_classification"),
    (SystemFacts(dim=4, euler_characteristic=0), NO_OBSTRUCTION, None),
    (SystemFacts(dim=4, equilibrium_indices=(1,), euler_characteristic=-4,
                 equilibria_complete=False), NOT_LINEARIZABLE, "euler_characteristic"),
    (SystemFacts(dim=2, equilibrium_indices=(2,), equilibria_complete=False),
     NOT_LINEARIZABLE, "hopf_index"),
]
