"""Bundle of a concrete model: geometry, one-particle matrices, Fock operators.

Everything downstream (thermal states, kernels, verification) consumes a
``Model``; the many-body operators are built lazily and cached.  The
interacting Hamiltonian pieces follow

    K_v = H + sum_nu v_nu N_nu + xi W,     K_0 = K_v at v = 0,
    K_D = K_0 - H_T  (coupled interactions off, tunneling removed).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fock import (
    FockSpace,
    ManyBodyOperator,
    anticommutator,
    build_b_ops,
    build_interaction,
    ladder_op,
    second_quantize,
)
from .lattice import Geometry, OnePartHamiltonian, TwoBodyPotential


@dataclass
class Model:
    one_particle: OnePartHamiltonian
    interaction: TwoBodyPotential
    sign_order: tuple | None = None
    orbital_cap: int = 14

    @property
    def geometry(self) -> Geometry:
        return self.one_particle.geometry

    @cached_property
    def space(self) -> FockSpace:
        return FockSpace(self.geometry.num_sites, cap=self.orbital_cap, sign_order=self.sign_order)

    @cached_property
    def h_biased(self) -> np.ndarray:
        return self.one_particle.h_biased

    # -- second-quantized pieces ----------------------------------------

    @cached_property
    def H(self) -> ManyBodyOperator:
        return second_quantize(self.space, self.one_particle.h)

    @cached_property
    def H_T(self) -> ManyBodyOperator:
        return second_quantize(self.space, self.one_particle.h_tunneling)

    @cached_property
    def N_total(self) -> ManyBodyOperator:
        return second_quantize(self.space, np.eye(self.geometry.num_sites))

    def N_lead(self, nu: int) -> ManyBodyOperator:
        return second_quantize(self.space, self.one_particle.lead_projector(nu))

    @cached_property
    def W(self) -> ManyBodyOperator:
        return build_interaction(self.space, self.interaction.embedded(self.geometry))

    @cached_property
    def K_v(self) -> ManyBodyOperator:
        op = self.H + self.interaction.strength * self.W
        for nu, v in enumerate(self.one_particle.bias):
            if v != 0.0:
                op = op + float(v) * self.N_lead(nu)
        return op

    @cached_property
    def K_0(self) -> ManyBodyOperator:
        return self.H + self.interaction.strength * self.W

    @cached_property
    def K_D(self) -> ManyBodyOperator:
        return self.K_0 - self.H_T

    # -- ladder families -------------------------------------------------

    def basis_vector(self, orbital: int) -> np.ndarray:
        e = np.zeros(self.geometry.num_sites, dtype=complex)
        e[orbital] = 1.0
        return e

    @cached_property
    def creation_family(self) -> tuple:
        """``a*(e_m)`` for every orbital, in canonical ordering."""
        return tuple(
            ladder_op(self.space, self.basis_vector(m), "create")
            for m in range(self.geometry.num_sites)
        )

    @cached_property
    def dressed_creation_family(self) -> tuple:
        """``b*(e_j) = i xi [W, a*(e_j)]`` for every orbital.

        Lead entries are exactly zero operators; keeping them in the family
        makes the lead-support property of the self-energy an actual computed
        outcome rather than an assumption.
        """
        ops = []
        for j in range(self.geometry.num_sites):
            _, b_star = build_b_ops(
                self.space, self.W, self.interaction.strength, self.basis_vector(j)
            )
            ops.append(b_star)
        return tuple(ops)

    def dressed_annihilation(self, j: int) -> ManyBodyOperator:
        return self.dressed_creation_family[j].dagger()

    def contact_operator(self, j: int, m: int) -> ManyBodyOperator:
        """Equal-time anticommutator ``{a*(e_m), b(e_j)}`` (number conserving)."""
        return anticommutator(self.creation_family[m], self.dressed_annihilation(j))

    @property
    def num_sample(self) -> int:
        return self.geometry.num_sample

    @property
    def num_sites(self) -> int:
        return self.geometry.num_sites
