"""Check that an abstract graph covers a concrete run, then break the
allocator and watch the check fail.
"""

from aam.abstract import BindAddr, KCFAPolicy, policy_zero_cfa
from aam.engine import soundness_check
from aam.syntax import parse

program = parse("((λ (id) ((λ (a) (id (λ (w) w))) (id (λ (z) z)))) (λ (x) x))")

print("0cfa:", soundness_check(program, policy_zero_cfa(program), fuel=1000))


class Colliding(KCFAPolicy):
    """Puts every continuation frame at the address of x."""

    def alloc(self, state, kont, role):
        if role[0] == "kont":
            return BindAddr("x")
        return super().alloc(state, kont, role)


print("colliding:", soundness_check(program, Colliding(program, 0, name="colliding"), fuel=1000))
