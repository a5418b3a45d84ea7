#include <gtest/gtest.h>

#include "pspl/fem.hpp"
#include "support.hpp"

namespace {

using namespace pspl;

#include "oracles/element_oracles.inc"

Mesh reference_triangle()
{
    Mesh m;
    m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    m.cells = {{0, 1, 2}};
    m.boundary_edges = {{{0, 1}, BoundaryTag::G4}, {{1, 2}, BoundaryTag::G2}, {{2, 0}, BoundaryTag::G3}};
    return m;
}

Mesh two_cell_square()
{
    Mesh m;
    m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
    m.cells = {{0, 1, 2}, {0, 2, 3}};
    m.boundary_edges = {{{0, 1}, BoundaryTag::G4},
                        {{1, 2}, BoundaryTag::G3},
                        {{2, 3}, BoundaryTag::G2},
                        {{3, 0}, BoundaryTag::G3}};
    return m;
}

/// Seven-point rule exact to degree 5, one degree above the production rule.
std::vector<QuadPoint> rule_deg5()
{
    const double s = std::sqrt(15.0);
    const double a1 = (6.0 - s) / 21.0, a2 = (6.0 + s) / 21.0;
    const double w1 = (155.0 - s) / 1200.0, w2 = (155.0 + s) / 1200.0;
    const double b1 = 1.0 - 2.0 * a1, b2 = 1.0 - 2.0 * a2;
    return {{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 9.0 / 40.0},
            {{a1, a1, b1}, w1}, {{a1, b1, a1}, w1}, {{b1, a1, a1}, w1},
            {{a2, a2, b2}, w2}, {{a2, b2, a2}, w2}, {{b2, a2, a2}, w2}};
}

template <std::size_t N, std::size_t M>
double max_abs(const std::array<std::array<double, M>, N>& k)
{
    double m = 0.0;
    for (const auto& row : k)
        for (double v : row)
            m = std::max(m, std::abs(v));
    return m;
}

const Mesh& small_mesh()
{
    static const Mesh m = generate_unit_square(test::tiny_spec(5));
    return m;
}

TEST(DofMap, SingleCellCounts)
{
    const Mesh m = reference_triangle();
    EXPECT_EQ(build_dofmap(m, SpaceKind::p1_scalar).num_dofs, 3u);
    EXPECT_EQ(build_dofmap(m, SpaceKind::p2_vector).num_dofs, 12u);
}

TEST(DofMap, TwoCellSquareSharesTheDiagonal)
{
    const auto dm = build_dofmap(two_cell_square(), SpaceKind::p2_vector);
    EXPECT_EQ(dm.num_dofs, 18u);
    // the midpoint of the shared edge (0, 2) is one node in both cells
    const auto n = dm.edge_node.at(edge_key(0, 2));
    int hits = 0;
    for (std::size_t c = 0; c < 2; ++c)
        for (auto node : dm.cell_nodes[c])
            hits += node == n;
    EXPECT_EQ(hits, 2);
}

TEST(DofMap, IndicesContiguousAndBoundarySetsInRange)
{
    for (auto kind : {SpaceKind::p1_scalar, SpaceKind::p2_vector}) {
        const auto dm = build_dofmap(small_mesh(), kind);
        std::vector<char> seen(dm.num_dofs, 0);
        for (auto d : dm.cell_dofs) {
            ASSERT_LT(d, dm.num_dofs);
            seen[d] = 1;
        }
        EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), std::ptrdiff_t(dm.num_dofs));
        for (const auto& [tag, sets] : dm.boundary_dofs)
            for (const auto& s : sets)
                for (auto d : s)
                    EXPECT_LT(d, dm.num_dofs);
    }
}

TEST(Elasticity, ReferenceElementMatchesSymbolicIntegral)
{
    const Mesh m = reference_triangle();
    const auto g = cell_geometry(m, 0);
    const auto kmu = elasticity_element(g, 1.0, 0.0);
    const auto klam = elasticity_element(g, 0.0, 1.0);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            EXPECT_NEAR(kmu[i][j], kElasticityMu1[i][j], 1e-13) << i << "," << j;
            EXPECT_NEAR(klam[i][j], kElasticityLambda1[i][j], 1e-13) << i << "," << j;
        }
}

TEST(Elasticity, RigidModesInKernel)
{
    const auto dm = build_dofmap(small_mesh(), SpaceKind::p2_vector);
    const CsrMatrix a = assemble_elasticity(small_mesh(), dm, parameter_set(1));
    const double an = a.norm();
    const auto tx = interpolate(dm, [](double, double) { return 1.0; }, [](double, double) { return 0.0; });
    const auto ty = interpolate(dm, [](double, double) { return 0.0; }, [](double, double) { return 1.0; });
    const auto rot = interpolate(dm, [](double, double y) { return -y; }, [](double x, double) { return x; });
    EXPECT_LE(norm2(spmv(a, tx)), 1e-10 * an * norm2(tx));
    EXPECT_LE(norm2(spmv(a, ty)), 1e-10 * an * norm2(ty));
    EXPECT_LE(norm2(spmv(a, rot)), 1e-9 * an * norm2(rot));
    // a stretch is not in the kernel
    const auto stretch = interpolate(dm, [](double x, double) { return x; }, [](double, double) { return 0.0; });
    EXPECT_GT(norm2(spmv(a, stretch)), 1e-3 * an * norm2(stretch) / double(dm.num_dofs));
}

TEST(Elasticity, DegenerateCellThrows)
{
    Mesh m = reference_triangle();
    m.vertices[2] = {2.0, 0.0};
    const auto dm = build_dofmap(m, SpaceKind::p2_vector);
    EXPECT_THROW(assemble_elasticity(m, dm, parameter_set(1)), GeometryError);
}

TEST(Quadrature, ProductionRuleAgreesWithHigherDegree)
{
    const Mesh& mesh = small_mesh();
    for (std::size_t c = 0; c < mesh.num_cells(); c += 7) {
        const auto g = cell_geometry(mesh, c);
        const double mu = 3.0, lambda = 2.0;
        const auto k = elasticity_element(g, mu, lambda);
        ElasticityElement ref{};
        std::array<std::array<double, 6>, 6> mass{}, mass_ref{};
        for (const auto& q : rule_deg5()) {
            const auto d = p2_gradients(q.bary, g);
            const auto v = p2_values(q.bary);
            const double w = q.weight * g.area;
            for (std::size_t a = 0; a < 6; ++a)
                for (std::size_t b = 0; b < 6; ++b) {
                    mass_ref[a][b] += w * v[a] * v[b];
                    for (std::size_t ca = 0; ca < 2; ++ca)
                        for (std::size_t cb = 0; cb < 2; ++cb) {
                            // eps(phi e_ca) : eps(phi e_cb) and div div
                            double e = 0.0;
                            if (ca == cb)
                                e += d[a][0] * d[b][0] + d[a][1] * d[b][1];
                            e += d[a][cb] * d[b][ca];
                            ref[2 * a + ca][2 * b + cb] += w * (mu * e + lambda * d[a][ca] * d[b][cb]);
                        }
                }
        }
        for (const auto& q : triangle_rule_deg4()) {
            const auto v = p2_values(q.bary);
            for (std::size_t a = 0; a < 6; ++a)
                for (std::size_t b = 0; b < 6; ++b)
                    mass[a][b] += q.weight * g.area * v[a] * v[b];
        }
        const double scale = max_abs(ref), mscale = max_abs(mass_ref);
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                EXPECT_NEAR(k[i][j], ref[i][j], 1e-12 * scale);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                EXPECT_NEAR(mass[i][j], mass_ref[i][j], 1e-12 * mscale);
    }
}

TEST(PressureStiffness, ReferenceElement)
{
    const auto k = p1_stiffness_element(cell_geometry(reference_triangle(), 0), 1.0);
    const double ref[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(k[i][j], ref[i][j], 1e-15);
}

TEST(PressureStiffness, ConstantsInKernelAndLinearInPermeability)
{
    const auto dm = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    MaterialParams p = parameter_set(1);
    const CsrMatrix b = assemble_pressure_stiffness(small_mesh(), dm, p, 1);
    EXPECT_LE(norm2(spmv(b, Vector(dm.num_dofs, 1.0))), 1e-12 * b.norm());
    p.k1 *= 2.0;
    const CsrMatrix b2 = assemble_pressure_stiffness(small_mesh(), dm, p, 1);
    ASSERT_EQ(b.nnz(), b2.nnz());
    for (std::size_t k = 0; k < b.nnz(); ++k)
        EXPECT_DOUBLE_EQ(b2.values()[k], 2.0 * b.values()[k]);
    EXPECT_THROW(assemble_pressure_stiffness(small_mesh(), dm, p, 3), InvalidSpecError);
}

TEST(Mass, ReferenceElement)
{
    const auto k = p1_mass_element(cell_geometry(reference_triangle(), 0), 1.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(k[i][j], (i == j ? 2.0 : 1.0) / 24.0, 1e-16);
}

TEST(Mass, EntrySumIsCoefficientTimesArea)
{
    for (auto kind : {SpaceKind::p1_scalar, SpaceKind::p2_vector}) {
        const auto dm = build_dofmap(small_mesh(), kind);
        const CsrMatrix m = assemble_scaled_mass(small_mesh(), dm, 2.5);
        double s = 0.0;
        for (double v : std::as_const(m).values())
            s += v;
        EXPECT_NEAR(s, 2.5 * double(dm.components()), 1e-12);
    }
}

TEST(Mass, ZeroCoefficientGivesZeroMatrix)
{
    const auto dm = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    EXPECT_EQ(assemble_scaled_mass(small_mesh(), dm, 0.0).max_abs(), 0.0);
    EXPECT_THROW(assemble_scaled_mass(small_mesh(), dm, -1.0), InvalidSpecError);
}

TEST(Coupling, ReferenceElementMatchesSymbolicIntegral)
{
    const auto k = coupling_element(cell_geometry(reference_triangle(), 0));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 12; ++j)
            EXPECT_NEAR(k[i][j], kCouplingRef[i][j], 1e-14) << i << "," << j;
}

TEST(Coupling, ConstantFieldHasNoDivergence)
{
    const auto du = build_dofmap(small_mesh(), SpaceKind::p2_vector);
    const auto dp = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    const CsrMatrix d = assemble_coupling(small_mesh(), du, dp);
    const auto c = interpolate(du, [](double, double) { return 0.3; }, [](double, double) { return -1.2; });
    for (double v : spmv(d, c))
        EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Coupling, DivergenceTheorem)
{
    const auto du = build_dofmap(small_mesh(), SpaceKind::p2_vector);
    const auto dp = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    const CsrMatrix d = assemble_coupling(small_mesh(), du, dp);
    const auto u = interpolate(du, [](double x, double) { return x; }, [](double, double) { return 0.0; });
    double s = 0.0;
    for (double v : spmv(d, u))
        s += v;
    EXPECT_NEAR(s, 1.0, 1e-10);
}

TEST(Traction, ZeroAtTimeZero)
{
    const Mesh m = generate_unit_square({20, 1.0, 0.1});
    const auto dm = build_dofmap(m, SpaceKind::p2_vector);
    const auto l = assemble_traction_load(m, dm, BoundaryTag::G1, sinusoidal_normal_traction(), 0.0);
    EXPECT_FALSE(l.warning);
    for (double v : l.values)
        EXPECT_EQ(v, 0.0);
}

TEST(Traction, PeakLoadTotalsStripLength)
{
    const Mesh m = generate_unit_square({20, 1.0, 0.1});
    const auto dm = build_dofmap(m, SpaceKind::p2_vector);
    const auto l = assemble_traction_load(m, dm, BoundaryTag::G1, sinusoidal_normal_traction(), 0.5);
    double fx = 0.0, fy = 0.0;
    for (std::size_t i = 0; i < dm.nodes.size(); ++i) {
        fx += l.values[2 * i];
        fy += l.values[2 * i + 1];
    }
    EXPECT_NEAR(fy, -0.2, 1e-10);
    EXPECT_NEAR(fx, 0.0, 1e-12);
    // supported on the strip only
    const auto strip = dm.boundary_set(std::array{BoundaryTag::G1}, 1);
    std::vector<char> on(dm.num_dofs, 0);
    for (auto d : strip)
        on[d] = 1;
    for (std::size_t i = 0; i < dm.num_dofs; ++i)
        if (!on[i] && i % 2 == 1)
            EXPECT_EQ(l.values[i], 0.0);
}

TEST(Traction, LinearInAmplitude)
{
    const Mesh m = generate_unit_square({12, 1.5, 0.1});
    const auto dm = build_dofmap(m, SpaceKind::p2_vector);
    const auto a = assemble_traction_load(m, dm, BoundaryTag::G1, sinusoidal_normal_traction(1.0), 0.3);
    const auto b = assemble_traction_load(m, dm, BoundaryTag::G1, sinusoidal_normal_traction(2.0), 0.3);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        EXPECT_DOUBLE_EQ(b.values[i], 2.0 * a.values[i]);
}

TEST(Traction, EmptyTagWarns)
{
    const Mesh m = reference_triangle();
    const auto dm = build_dofmap(m, SpaceKind::p2_vector);
    const auto l = assemble_traction_load(m, dm, BoundaryTag::G1, std::array{0.0, -1.0});
    ASSERT_TRUE(l.warning.has_value());
    EXPECT_EQ(norm2(l.values), 0.0);
}

TEST(Dirichlet, EmptySetLeavesSystemUnchanged)
{
    CsrMatrix a = CsrMatrix::from_dense(test::MatrixXd::Random(4, 4));
    const CsrMatrix before = a;
    Vector rhs{1.0, 2.0, 3.0, 4.0};
    apply_dirichlet(a, rhs, {}, 5.0);
    EXPECT_EQ(a.to_dense(), before.to_dense());
    EXPECT_EQ(rhs, (Vector{1.0, 2.0, 3.0, 4.0}));
}

TEST(Dirichlet, AllDofsGivesIdentity)
{
    const auto dm = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    CsrMatrix a = assemble_pressure_stiffness(small_mesh(), dm, parameter_set(1), 1);
    Vector rhs = test::random_vector(dm.num_dofs, 3);
    std::vector<std::size_t> all(dm.num_dofs);
    std::iota(all.begin(), all.end(), std::size_t{0});
    apply_dirichlet(a, rhs, all, 0.0);
    const auto d = a.to_dense();
    EXPECT_EQ(d, test::MatrixXd::Identity(d.rows(), d.cols()));
    EXPECT_EQ(rhs, Vector(dm.num_dofs, 0.0));
}

TEST(Dirichlet, ConstrainedSolveAttainsValueAndStaysSymmetric)
{
    const auto dm = build_dofmap(small_mesh(), SpaceKind::p1_scalar);
    MaterialParams p = parameter_set(1);
    CsrMatrix a = assemble_pressure_stiffness(small_mesh(), dm, p, 1);
    const auto fixed = dm.boundary_set(std::array{BoundaryTag::G4});
    Vector rhs(dm.num_dofs, 0.0);
    apply_dirichlet(a, rhs, fixed, 3.5);
    EXPECT_LE(symmetry_defect(a), 1e-14);
    const Vector x = dense_solve(a.to_dense(), rhs);
    for (auto d : fixed)
        EXPECT_EQ(x[d], 3.5);
    // harmonic with constant data: constant everywhere
    for (double v : x)
        EXPECT_NEAR(v, 3.5, 1e-9);
    Vector r2(dm.num_dofs, 0.0);
    const std::vector<std::size_t> bad{dm.num_dofs};
    EXPECT_THROW(apply_dirichlet(a, r2, bad, 0.0), DimensionError);
}

TEST(Assembly, AllFormsSymmetric)
{
    const Mesh m = generate_unit_square({10, 2.0, 0.1});
    const auto du = build_dofmap(m, SpaceKind::p2_vector);
    const auto dp = build_dofmap(m, SpaceKind::p1_scalar);
    const MaterialParams p = parameter_set(2);
    EXPECT_LE(symmetry_defect(assemble_elasticity(m, du, p)), 1e-12);
    EXPECT_LE(symmetry_defect(assemble_pressure_stiffness(m, dp, p, 1)), 1e-12);
    EXPECT_LE(symmetry_defect(assemble_pressure_stiffness(m, dp, p, 2)), 1e-12);
    EXPECT_LE(symmetry_defect(assemble_scaled_mass(m, dp, p.beta1)), 1e-12);
    EXPECT_LE(symmetry_defect(assemble_scaled_mass(m, du, 1.0)), 1e-12);
}

TEST(Transfer, ReproducesRepresentableFields)
{
    const Mesh a = generate_unit_square({6, 1.0, 0.1});
    const Mesh b = generate_unit_square({9, 2.0, 0.1});
    const auto pa = build_dofmap(a, SpaceKind::p1_scalar), pb = build_dofmap(b, SpaceKind::p1_scalar);
    const auto ua = build_dofmap(a, SpaceKind::p2_vector), ub = build_dofmap(b, SpaceKind::p2_vector);
    auto lin = [](double x, double y) { return 1.0 + 2.0 * x - 3.0 * y; };
    auto qx = [](double x, double y) { return x * x - x * y + 0.5; };
    auto qy = [](double x, double y) { return y * y + 2.0 * x; };
    const auto p = transfer_field(a, pa, interpolate(pa, lin), pb);
    const auto pref = interpolate(pb, lin);
    for (std::size_t i = 0; i < p.size(); ++i)
        EXPECT_NEAR(p[i], pref[i], 1e-12);
    const auto u = transfer_field(a, ua, interpolate(ua, qx, qy), ub);
    const auto uref = interpolate(ub, qx, qy);
    for (std::size_t i = 0; i < u.size(); ++i)
        EXPECT_NEAR(u[i], uref[i], 1e-12);
}

} // namespace
