"""Dense linear-algebra oracles for test_linalg.cpp.

Writes linalg_oracles.inc: the exact inverse of the 4x4 Hilbert matrix and
the eigenvalues of a 3x3 symmetric pencil (S, T), obtained as the roots of
det(S - nu T) with sympy.
"""
import pathlib
import sympy as sp

hilbert = sp.Matrix(4, 4, lambda i, j: sp.Rational(1, i + j + 1))
hinv = hilbert.inv()

S = sp.Matrix([[4, 1, 2], [1, 3, 0], [2, 0, 5]])
T = sp.Matrix([[2, 1, 0], [1, 3, 1], [0, 1, 2]])
nu = sp.symbols("nu")
roots = sorted(sp.Poly((S - nu * T).det(), nu).nroots(n=30))

out = ["// Generated by linalg_oracles.py (sympy).", ""]
out.append("inline constexpr double kHilbertInverse[4][4] = {")
for i in range(4):
    out.append("    {" + ", ".join(f"{int(hinv[i, j])}.0" for j in range(4)) + "},")
out.append("};")
out.append("")
for name, m in (("kPencilS", S), ("kPencilT", T)):
    out.append(f"inline constexpr double {name}[3][3] = {{")
    for i in range(3):
        out.append("    {" + ", ".join(f"{int(m[i, j])}.0" for j in range(3)) + "},")
    out.append("};")
out.append("")
out.append("inline constexpr double kPencilEigenvalues[3] = {" + ", ".join(sp.sstr(sp.re(r), full_prec=False) for r in roots) + "};")
pathlib.Path(__file__).with_name("linalg_oracles.inc").write_text("\n".join(out) + "\n")
print("ok")
