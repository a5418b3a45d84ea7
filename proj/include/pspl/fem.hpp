#pragma once

// Degrees of freedom, quadrature and element assembly for the P2-vector
// displacement / P1-scalar pressure pair.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pspl/error.hpp"
#include "pspl/linalg.hpp"
#include "pspl/mesh.hpp"

namespace pspl {

using FieldVector = Vector;

enum class SpaceKind { p1_scalar, p2_vector };

/// Cell-to-dof table plus boundary dof sets.
///
/// P1-scalar: one dof per vertex, dof = vertex index.
/// P2-vector: nodes are the vertices followed by one node per edge
/// (midpoint); dof = 2 * node + component. Local cell nodes are the three
/// vertices then the midpoints of local edges (0,1), (1,2), (2,0).
struct DofMap {
    SpaceKind kind = SpaceKind::p1_scalar;
    std::size_t num_dofs = 0;
    std::size_t dofs_per_cell = 0;
    std::vector<std::size_t> cell_dofs; ///< num_cells * dofs_per_cell
    std::vector<Point> nodes;           ///< nodal positions
    std::vector<std::array<std::size_t, 6>> cell_nodes; ///< P2 only
    std::unordered_map<std::uint64_t, std::size_t> edge_node; ///< P2 only, edge -> node
    /// boundary dofs per tag and component (scalar spaces use component 0)
    std::map<BoundaryTag, std::array<std::vector<std::size_t>, 2>> boundary_dofs;

    int components() const { return kind == SpaceKind::p2_vector ? 2 : 1; }

    std::span<const std::size_t> dofs_of(std::size_t cell) const
    {
        return {cell_dofs.data() + cell * dofs_per_cell, dofs_per_cell};
    }

    /// Union of boundary dofs for the given tags and component.
    std::vector<std::size_t> boundary_set(std::span<const BoundaryTag> tags, int component = 0) const
    {
        std::vector<char> mark(num_dofs, 0);
        for (auto t : tags) {
            auto it = boundary_dofs.find(t);
            if (it == boundary_dofs.end())
                continue;
            for (auto d : it->second[std::size_t(component)])
                mark[d] = 1;
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < num_dofs; ++i)
            if (mark[i])
                out.push_back(i);
        return out;
    }
};

inline DofMap build_dofmap(const Mesh& mesh, SpaceKind kind)
{
    DofMap dm;
    dm.kind = kind;
    if (kind == SpaceKind::p1_scalar) {
        dm.num_dofs = mesh.num_vertices();
        dm.dofs_per_cell = 3;
        dm.nodes = mesh.vertices;
        dm.cell_dofs.reserve(3 * mesh.num_cells());
        for (const auto& c : mesh.cells)
            dm.cell_dofs.insert(dm.cell_dofs.end(), c.begin(), c.end());
        for (const auto& e : mesh.boundary_edges) {
            auto& set = dm.boundary_dofs[e.tag][0];
            set.push_back(e.v[0]);
            set.push_back(e.v[1]);
        }
    } else {
        const std::size_t nv = mesh.num_vertices();
        dm.nodes = mesh.vertices;
        dm.dofs_per_cell = 12;
        dm.cell_nodes.reserve(mesh.num_cells());
        for (const auto& c : mesh.cells) {
            std::array<std::size_t, 6> local{c[0], c[1], c[2], 0, 0, 0};
            for (int k = 0; k < 3; ++k) {
                const auto a = c[std::size_t(k)], b = c[std::size_t((k + 1) % 3)];
                auto [it, fresh] = dm.edge_node.try_emplace(edge_key(a, b), nv + dm.edge_node.size());
                if (fresh) {
                    const auto& pa = mesh.vertices[a];
                    const auto& pb = mesh.vertices[b];
                    dm.nodes.push_back({0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)});
                }
                local[std::size_t(3 + k)] = it->second;
            }
            dm.cell_nodes.push_back(local);
        }
        dm.num_dofs = 2 * dm.nodes.size();
        dm.cell_dofs.reserve(12 * mesh.num_cells());
        for (const auto& ln : dm.cell_nodes)
            for (auto n : ln)
                for (std::size_t comp = 0; comp < 2; ++comp)
                    dm.cell_dofs.push_back(2 * n + comp);
        for (const auto& e : mesh.boundary_edges) {
            auto& sets = dm.boundary_dofs[e.tag];
            auto it = dm.edge_node.find(edge_key(e.v[0], e.v[1]));
            if (it == dm.edge_node.end())
                throw TaggingError("boundary edge is not an edge of the mesh");
            for (auto n : {e.v[0], e.v[1], it->second})
                for (std::size_t comp = 0; comp < 2; ++comp)
                    sets[comp].push_back(2 * n + comp);
        }
    }
    for (auto& [tag, sets] : dm.boundary_dofs)
        for (auto& s : sets) {
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
        }
    return dm;
}

// ---------------------------------------------------------------------------

/// Material coefficients, always SI.
struct MaterialParams {
    double mu = 0.0;     ///< Pa
    double lambda = 0.0; ///< Pa
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double beta1 = 0.0;  ///< 1/Pa
    double beta2 = 0.0;  ///< 1/Pa
    double k1 = 0.0;     ///< m^2
    double k2 = 0.0;     ///< m^2
    double eta = 0.0;    ///< Pa s
    double gamma = 0.0;  ///< exchange coefficient

    void validate() const
    {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw InvalidSpecError(std::string(name) + " must be positive");
        };
        pos(mu, "mu");
        pos(lambda, "lambda");
        pos(beta1, "beta1");
        pos(beta2, "beta2");
        pos(k1, "k1");
        pos(k2, "k2");
        pos(eta, "eta");
        if (!(gamma >= 0.0))
            throw InvalidSpecError("gamma must be nonnegative");
        if (!(alpha1 >= 0.0 && alpha1 <= 1.0) || !(alpha2 >= 0.0 && alpha2 <= 1.0))
            throw InvalidSpecError("Biot coefficients must lie in [0, 1]");
    }

    friend bool operator==(const MaterialParams&, const MaterialParams&) = default;
};

/// Reference parameter sets 1-3 of the double-porosity benchmark; they differ
/// only in the storage coefficients.
inline MaterialParams parameter_set(int set)
{
    MaterialParams p;
    p.eta = 0.001;
    p.mu = 4.2e6;
    p.lambda = 2.4e6;
    p.k1 = 6.18e-15;
    p.k2 = 27.2e-15;
    p.alpha1 = 0.95;
    p.alpha2 = 0.12;
    p.gamma = 5e-10;
    switch (set) {
    case 1:
        p.beta1 = 54e-9;
        p.beta2 = 14e-9;
        break;
    case 2:
        p.beta1 = 108e-9;
        p.beta2 = 24e-9;
        break;
    case 3:
        p.beta1 = 216e-9;
        p.beta2 = 48e-9;
        break;
    default:
        throw InvalidSpecError("parameter set must be 1, 2 or 3");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Quadrature.

struct QuadPoint {
    std::array<double, 3> bary;
    double weight; ///< fraction of the cell area
};

/// Six-point symmetric rule, exact for polynomials of degree 4.
inline const std::array<QuadPoint, 6>& triangle_rule_deg4()
{
    static const std::array<QuadPoint, 6> rule = [] {
        constexpr double a1 = 0.44594849091596488631832925388305;
        constexpr double w1 = 0.22338158967801146569500700843312;
        constexpr double a2 = 0.091576213509770743459571463402202;
        constexpr double w2 = 0.10995174365532186763832632490021;
        constexpr double b1 = 1.0 - 2.0 * a1;
        constexpr double b2 = 1.0 - 2.0 * a2;
        return std::array<QuadPoint, 6>{{{{a1, a1, b1}, w1},
                                         {{a1, b1, a1}, w1},
                                         {{b1, a1, a1}, w1},
                                         {{a2, a2, b2}, w2},
                                         {{a2, b2, a2}, w2},
                                         {{b2, a2, a2}, w2}}};
    }();
    return rule;
}

/// Three-point Gauss rule on [0, 1].
inline const std::array<std::pair<double, double>, 3>& edge_rule()
{
    static const std::array<std::pair<double, double>, 3> rule = [] {
        const double s = 0.5 * std::sqrt(0.6);
        return std::array<std::pair<double, double>, 3>{
            {{0.5 - s, 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 + s, 5.0 / 18.0}}};
    }();
    return rule;
}

// ---------------------------------------------------------------------------
// Element geometry and shape functions.

struct CellGeometry {
    double area = 0.0;
    std::array<std::array<double, 2>, 3> grad_bary{}; ///< gradients of barycentric coordinates
};

inline CellGeometry cell_geometry(const Mesh& m, std::size_t c)
{
    const auto& k = m.cells[c];
    const Point& p0 = m.vertices[k[0]];
    const Point& p1 = m.vertices[k[1]];
    const Point& p2 = m.vertices[k[2]];
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    if (!(det > 0.0) || !std::isfinite(det))
        throw GeometryError("degenerate or inverted cell " + std::to_string(c));
    CellGeometry g;
    g.area = 0.5 * det;
    g.grad_bary[1] = {(p2.y - p0.y) / det, -(p2.x - p0.x) / det};
    g.grad_bary[2] = {-(p1.y - p0.y) / det, (p1.x - p0.x) / det};
    g.grad_bary[0] = {-g.grad_bary[1][0] - g.grad_bary[2][0], -g.grad_bary[1][1] - g.grad_bary[2][1]};
    return g;
}

inline constexpr std::array<std::array<int, 2>, 3> p2_edges{{{0, 1}, {1, 2}, {2, 0}}};

inline std::array<double, 6> p2_values(const std::array<double, 3>& l)
{
    std::array<double, 6> v{};
    for (int i = 0; i < 3; ++i)
        v[std::size_t(i)] = l[std::size_t(i)] * (2.0 * l[std::size_t(i)] - 1.0);
    for (int e = 0; e < 3; ++e)
        v[std::size_t(3 + e)] = 4.0 * l[std::size_t(p2_edges[std::size_t(e)][0])] *
                                l[std::size_t(p2_edges[std::size_t(e)][1])];
    return v;
}

inline std::array<std::array<double, 2>, 6> p2_gradients(const std::array<double, 3>& l, const CellGeometry& g)
{
    std::array<std::array<double, 2>, 6> d{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            d[i][c] = (4.0 * l[i] - 1.0) * g.grad_bary[i][c];
    for (std::size_t e = 0; e < 3; ++e) {
        const auto i = std::size_t(p2_edges[e][0]), j = std::size_t(p2_edges[e][1]);
        for (std::size_t c = 0; c < 2; ++c)
            d[3 + e][c] = 4.0 * (l[j] * g.grad_bary[i][c] + l[i] * g.grad_bary[j][c]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Element matrices (exposed for testing) and global assembly.

using ElasticityElement = std::array<std::array<double, 12>, 12>;

/// Local matrix of  2 mu eps(u):eps(v) + lambda div u div v  in local dof
/// order 2*node + component.
inline ElasticityElement elasticity_element(const CellGeometry& g, double mu, double lambda)
{
    ElasticityElement k{};
    for (const auto& q : triangle_rule_deg4()) {
        const auto d = p2_gradients(q.bary, g);
        const double w = q.weight * g.area;
        for (std::size_t a = 0; a < 6; ++a)
            for (std::size_t b = 0; b < 6; ++b) {
                const double gg = d[a][0] * d[b][0] + d[a][1] * d[b][1];
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t e = 0; e < 2; ++e) {
                        double v = mu * d[a][e] * d[b][c] + lambda * d[a][c] * d[b][e];
                        if (c == e)
                            v += mu * gg;
                        k[2 * a + c][2 * b + e] += w * v;
                    }
            }
    }
    return k;
}

inline std::array<std::array<double, 3>, 3> p1_stiffness_element(const CellGeometry& g, double coef)
{
    std::array<std::array<double, 3>, 3> k{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            k[i][j] = coef * g.area *
                      (g.grad_bary[i][0] * g.grad_bary[j][0] + g.grad_bary[i][1] * g.grad_bary[j][1]);
    return k;
}

inline std::array<std::array<double, 3>, 3> p1_mass_element(const CellGeometry& g, double coef)
{
    std::array<std::array<double, 3>, 3> k{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            k[i][j] = coef * g.area / 12.0 * (i == j ? 2.0 : 1.0);
    return k;
}

/// Local matrix of  (div u, q)  with rows = P1 basis, cols = P2-vector dofs.
inline std::array<std::array<double, 12>, 3> coupling_element(const CellGeometry& g)
{
    std::array<std::array<double, 12>, 3> k{};
    for (const auto& q : triangle_rule_deg4()) {
        const auto d = p2_gradients(q.bary, g);
        const double w = q.weight * g.area;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t b = 0; b < 6; ++b)
                for (std::size_t c = 0; c < 2; ++c)
                    k[i][2 * b + c] += w * q.bary[i] * d[b][c];
    }
    return k;
}

namespace detail {
inline void require_kind(const DofMap& dm, SpaceKind k, const char* who)
{
    if (dm.kind != k)
        throw DimensionError(std::string(who) + ": wrong function space");
}
} // namespace detail

inline CsrMatrix assemble_elasticity(const Mesh& mesh, const DofMap& dm, const MaterialParams& p)
{
    detail::require_kind(dm, SpaceKind::p2_vector, "assemble_elasticity");
    std::vector<Triplet> t;
    t.reserve(144 * mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto k = elasticity_element(cell_geometry(mesh, c), p.mu, p.lambda);
        const auto dofs = dm.dofs_of(c);
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                t.push_back({dofs[i], dofs[j], k[i][j]});
    }
    return CsrMatrix::from_triplets(dm.num_dofs, dm.num_dofs, std::move(t));
}

/// Matrix of  (k_leg / eta) grad p . grad q.
inline CsrMatrix assemble_pressure_stiffness(const Mesh& mesh, const DofMap& dm, const MaterialParams& p, int leg)
{
    detail::require_kind(dm, SpaceKind::p1_scalar, "assemble_pressure_stiffness");
    if (leg != 1 && leg != 2)
        throw InvalidSpecError("pressure leg must be 1 or 2");
    const double coef = (leg == 1 ? p.k1 : p.k2) / p.eta;
    std::vector<Triplet> t;
    t.reserve(9 * mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto k = p1_stiffness_element(cell_geometry(mesh, c), coef);
        const auto dofs = dm.dofs_of(c);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                t.push_back({dofs[i], dofs[j], k[i][j]});
    }
    return CsrMatrix::from_triplets(dm.num_dofs, dm.num_dofs, std::move(t));
}

/// Matrix of  coefficient * (p, q)  on a P1 space, or the vector mass matrix
/// on a P2-vector space.
inline CsrMatrix assemble_scaled_mass(const Mesh& mesh, const DofMap& dm, double coefficient)
{
    if (!(coefficient >= 0.0))
        throw InvalidSpecError("mass coefficient must be nonnegative");
    std::vector<Triplet> t;
    if (dm.kind == SpaceKind::p1_scalar) {
        t.reserve(9 * mesh.num_cells());
        for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
            const auto k = p1_mass_element(cell_geometry(mesh, c), coefficient);
            const auto dofs = dm.dofs_of(c);
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j)
                    t.push_back({dofs[i], dofs[j], k[i][j]});
        }
    } else {
        t.reserve(72 * mesh.num_cells());
        for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
            const auto g = cell_geometry(mesh, c);
            std::array<std::array<double, 6>, 6> k{};
            for (const auto& q : triangle_rule_deg4()) {
                const auto v = p2_values(q.bary);
                for (std::size_t a = 0; a < 6; ++a)
                    for (std::size_t b = 0; b < 6; ++b)
                        k[a][b] += coefficient * q.weight * g.area * v[a] * v[b];
            }
            const auto dofs = dm.dofs_of(c);
            for (std::size_t a = 0; a < 6; ++a)
                for (std::size_t b = 0; b < 6; ++b)
                    for (std::size_t comp = 0; comp < 2; ++comp)
                        t.push_back({dofs[2 * a + comp], dofs[2 * b + comp], k[a][b]});
        }
    }
    return CsrMatrix::from_triplets(dm.num_dofs, dm.num_dofs, std::move(t));
}

/// Matrix of  (div u, q): pressure rows, displacement columns.
inline CsrMatrix assemble_coupling(const Mesh& mesh, const DofMap& dm_u, const DofMap& dm_p)
{
    detail::require_kind(dm_u, SpaceKind::p2_vector, "assemble_coupling");
    detail::require_kind(dm_p, SpaceKind::p1_scalar, "assemble_coupling");
    std::vector<Triplet> t;
    t.reserve(36 * mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const auto k = coupling_element(cell_geometry(mesh, c));
        const auto du = dm_u.dofs_of(c);
        const auto dp = dm_p.dofs_of(c);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                t.push_back({dp[i], du[j], k[i][j]});
    }
    return CsrMatrix::from_triplets(dm_p.num_dofs, dm_u.num_dofs, std::move(t));
}

// ---------------------------------------------------------------------------
// Boundary loads.

/// Surface traction as a function of time and outward unit normal.
using Traction = std::function<std::array<double, 2>(double t, const Point& normal)>;

/// The benchmark load  g = -amplitude * sin(pi t) n.
inline Traction sinusoidal_normal_traction(double amplitude = 1.0)
{
    return [amplitude](double t, const Point& n) {
        const double s = -amplitude * std::sin(M_PI * t);
        return std::array<double, 2>{s * n.x, s * n.y};
    };
}

struct TractionLoad {
    FieldVector values;
    std::optional<std::string> warning; ///< set when the tag has no edges
};

namespace detail {
/// Outward unit normal of a boundary edge, oriented away from the adjacent
/// cell (found via the opposite vertex).
inline Point outward_normal(const Mesh& mesh, const std::array<std::size_t, 2>& e,
                            const std::unordered_map<std::uint64_t, std::size_t>& opposite)
{
    const Point& a = mesh.vertices[e[0]];
    const Point& b = mesh.vertices[e[1]];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    Point n{(b.y - a.y) / len, -(b.x - a.x) / len};
    auto it = opposite.find(edge_key(e[0], e[1]));
    if (it != opposite.end()) {
        const Point& o = mesh.vertices[it->second];
        if ((o.x - a.x) * n.x + (o.y - a.y) * n.y > 0.0)
            n = {-n.x, -n.y};
    }
    return n;
}

inline std::unordered_map<std::uint64_t, std::size_t> opposite_vertices(const Mesh& mesh)
{
    std::unordered_map<std::uint64_t, std::size_t> opp;
    for (const auto& c : mesh.cells)
        for (int k = 0; k < 3; ++k)
            opp[edge_key(c[std::size_t(k)], c[std::size_t((k + 1) % 3)])] = c[std::size_t((k + 2) % 3)];
    return opp;
}
} // namespace detail

/// Load vector of  int_{tag} g(t) . v ds  on the P2-vector space.
inline TractionLoad assemble_traction_load(const Mesh& mesh, const DofMap& dm, BoundaryTag tag,
                                           const Traction& traction, double t)
{
    detail::require_kind(dm, SpaceKind::p2_vector, "assemble_traction_load");
    TractionLoad out;
    out.values.assign(dm.num_dofs, 0.0);
    const auto opp = detail::opposite_vertices(mesh);
    std::size_t count = 0;
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag != tag)
            continue;
        ++count;
        const double len = mesh.edge_length(e.v);
        const Point n = detail::outward_normal(mesh, e.v, opp);
        const auto g = traction(t, n);
        const std::array<std::size_t, 3> nodes{e.v[0], e.v[1], dm.edge_node.at(edge_key(e.v[0], e.v[1]))};
        for (const auto& [s, w] : edge_rule()) {
            const std::array<double, 3> shape{(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)};
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t comp = 0; comp < 2; ++comp)
                    out.values[2 * nodes[a] + comp] += len * w * shape[a] * g[comp];
        }
    }
    if (count == 0)
        out.warning = "boundary segment " + tag_name(tag) + " has no edges; load is empty";
    return out;
}

/// Constant traction vector on a boundary segment.
inline TractionLoad assemble_traction_load(const Mesh& mesh, const DofMap& dm, BoundaryTag tag,
                                           std::array<double, 2> traction)
{
    return assemble_traction_load(
        mesh, dm, tag, [traction](double, const Point&) { return traction; }, 0.0);
}

// ---------------------------------------------------------------------------
// Dirichlet conditions.

/// Symmetric elimination: constrained rows and columns are zeroed, the
/// diagonal set to 1 and the right-hand side adjusted so that the solution
/// takes `value` at the constrained dofs. Matrix size is unchanged.
inline void apply_dirichlet(CsrMatrix& a, std::span<double> rhs, std::span<const std::size_t> dofs, double value)
{
    if (a.rows() != a.cols() || rhs.size() != a.rows())
        throw DimensionError("apply_dirichlet: shape mismatch");
    if (dofs.empty())
        return;
    std::vector<char> fixed(a.rows(), 0);
    for (auto d : dofs) {
        if (d >= a.rows())
            throw DimensionError("apply_dirichlet: dof out of range");
        fixed[d] = 1;
    }
    bool missing_diag = false;
    for (auto d : dofs)
        missing_diag = missing_diag || a.find(d, d) == nullptr;
    if (missing_diag) {
        std::vector<Triplet> t;
        a.to_triplets(t);
        for (auto d : dofs)
            t.push_back({d, d, 0.0});
        a = CsrMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
    }
    const auto off = a.offsets();
    const auto idx = a.indices();
    auto val = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
            const std::size_t c = idx[k];
            if (fixed[r]) {
                val[k] = (c == r) ? 1.0 : 0.0;
            } else if (fixed[c]) {
                rhs[r] -= val[k] * value;
                val[k] = 0.0;
            }
        }
    for (auto d : dofs)
        rhs[d] = value;
}

/// Matrix-only symmetric elimination with a chosen diagonal value (0 zeroes
/// the constrained rows and columns entirely).
inline void constrain_symmetric(CsrMatrix& a, std::span<const std::size_t> dofs, double diagonal)
{
    std::vector<double> rhs(a.rows(), 0.0);
    apply_dirichlet(a, rhs, dofs, 0.0);
    if (diagonal != 1.0)
        for (auto d : dofs)
            *a.find(d, d) = diagonal;
}

/// Zero the listed rows of a rectangular matrix.
inline void zero_rows(CsrMatrix& a, std::span<const std::size_t> rows)
{
    for (auto r : rows)
        a.zero_row(r);
}

/// Zero the listed columns of a rectangular matrix.
inline void zero_cols(CsrMatrix& a, std::span<const std::size_t> cols)
{
    std::vector<char> mark(a.cols(), 0);
    for (auto c : cols)
        mark[c] = 1;
    const auto idx = a.indices();
    auto val = a.values();
    for (std::size_t k = 0; k < a.nnz(); ++k)
        if (mark[idx[k]])
            val[k] = 0.0;
}

// ---------------------------------------------------------------------------
// Nodal interpolation and point evaluation.

/// Nodal interpolant of a scalar function (P1) or of a vector function given
/// as two components (P2-vector).
inline FieldVector interpolate(const DofMap& dm, const std::function<double(double, double)>& fx,
                               const std::function<double(double, double)>& fy = {})
{
    FieldVector v(dm.num_dofs, 0.0);
    if (dm.kind == SpaceKind::p1_scalar) {
        for (std::size_t i = 0; i < dm.nodes.size(); ++i)
            v[i] = fx(dm.nodes[i].x, dm.nodes[i].y);
    } else {
        for (std::size_t i = 0; i < dm.nodes.size(); ++i) {
            v[2 * i] = fx(dm.nodes[i].x, dm.nodes[i].y);
            v[2 * i + 1] = fy ? fy(dm.nodes[i].x, dm.nodes[i].y) : 0.0;
        }
    }
    return v;
}

/// Locates points in a mesh with a uniform bucket grid and evaluates finite
/// element fields there.
class PointLocator {
public:
    explicit PointLocator(const Mesh& mesh) : mesh_(&mesh)
    {
        const std::size_t nc = mesh.num_cells();
        n_ = std::max<std::size_t>(1, std::size_t(std::sqrt(double(nc) / 2.0)));
        buckets_.resize(n_ * n_);
        for (std::size_t c = 0; c < nc; ++c) {
            double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
            for (auto v : mesh.cells[c]) {
                x0 = std::min(x0, mesh.vertices[v].x);
                x1 = std::max(x1, mesh.vertices[v].x);
                y0 = std::min(y0, mesh.vertices[v].y);
                y1 = std::max(y1, mesh.vertices[v].y);
            }
            for (std::size_t j = bucket(y0); j <= bucket(y1); ++j)
                for (std::size_t i = bucket(x0); i <= bucket(x1); ++i)
                    buckets_[j * n_ + i].push_back(c);
        }
    }

    /// Cell containing p and its barycentric coordinates.
    std::pair<std::size_t, std::array<double, 3>> locate(const Point& p) const
    {
        constexpr double tol = 1e-10;
        double best = -1e300;
        std::pair<std::size_t, std::array<double, 3>> found{0, {}};
        for (auto c : buckets_[bucket(p.y) * n_ + bucket(p.x)]) {
            const auto l = barycentric(c, p);
            const double m = std::min({l[0], l[1], l[2]});
            if (m > best) {
                best = m;
                found = {c, l};
            }
            if (m >= -tol)
                return {c, l};
        }
        if (best < -1e-6)
            throw GeometryError("point outside the mesh");
        return found;
    }

    double evaluate(const DofMap& dm, std::span<const double> field, const Point& p, int component = 0) const
    {
        const auto [c, l] = locate(p);
        const auto dofs = dm.dofs_of(c);
        if (dm.kind == SpaceKind::p1_scalar)
            return l[0] * field[dofs[0]] + l[1] * field[dofs[1]] + l[2] * field[dofs[2]];
        const auto phi = p2_values(l);
        double s = 0.0;
        for (std::size_t a = 0; a < 6; ++a)
            s += phi[a] * field[dofs[2 * a + std::size_t(component)]];
        return s;
    }

private:
    std::size_t bucket(double v) const
    {
        const double f = std::clamp(v, 0.0, 1.0) * double(n_);
        return std::min(n_ - 1, std::size_t(f));
    }

    std::array<double, 3> barycentric(std::size_t c, const Point& p) const
    {
        const auto& k = mesh_->cells[c];
        const Point& a = mesh_->vertices[k[0]];
        const Point& b = mesh_->vertices[k[1]];
        const Point& d = mesh_->vertices[k[2]];
        const double det = (b.x - a.x) * (d.y - a.y) - (d.x - a.x) * (b.y - a.y);
        const double l1 = ((p.x - a.x) * (d.y - a.y) - (d.x - a.x) * (p.y - a.y)) / det;
        const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        return {1.0 - l1 - l2, l1, l2};
    }

    const Mesh* mesh_;
    std::size_t n_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

/// Transfer a field between meshes of the unit square by evaluating the
/// source interpolant at the target's nodes.
inline FieldVector transfer_field(const Mesh& src_mesh, const DofMap& src, std::span<const double> field,
                                  const DofMap& dst)
{
    if (src.kind != dst.kind)
        throw DimensionError("transfer_field: space mismatch");
    const PointLocator loc(src_mesh);
    FieldVector out(dst.num_dofs, 0.0);
    for (std::size_t i = 0; i < dst.nodes.size(); ++i)
        for (int comp = 0; comp < dst.components(); ++comp)
            out[std::size_t(dst.components()) * i + std::size_t(comp)] =
                loc.evaluate(src, field, dst.nodes[i], comp);
    return out;
}

} // namespace pspl
