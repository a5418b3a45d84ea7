#pragma once

// Triangulations of the unit square with tagged boundary segments:
//   G1  loaded strip on the top side, x in [0.5 - w, 0.5 + w]
//   G2  rest of the top side
//   G3  vertical sides x = 0 and x = 1
//   G4  bottom side y = 0

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pspl/error.hpp"

namespace pspl {

enum class BoundaryTag : std::uint8_t { G1 = 1, G2 = 2, G3 = 3, G4 = 4 };

inline constexpr std::array<BoundaryTag, 4> all_tags{BoundaryTag::G1, BoundaryTag::G2, BoundaryTag::G3,
                                                     BoundaryTag::G4};

inline int tag_index(BoundaryTag t) { return static_cast<int>(t); }

inline std::string tag_name(BoundaryTag t) { return "G" + std::to_string(tag_index(t)); }

inline BoundaryTag parse_tag(std::string_view s)
{
    for (auto t : all_tags)
        if (s == tag_name(t))
            return t;
    throw InvalidSpecError("unknown boundary tag '" + std::string(s) + "'");
}

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

using Cell = std::array<std::size_t, 3>;

struct BoundaryEdge {
    std::array<std::size_t, 2> v;
    BoundaryTag tag;
    friend bool operator==(const BoundaryEdge&, const BoundaryEdge&) = default;
};

struct MeshSpec {
    int resolution = 20;          ///< cells per side before grading
    double grading = 1.0;         ///< density ratio at the strip vs far field, >= 1
    double strip_half_width = 0.1;
};

inline double signed_area(const Point& a, const Point& b, const Point& c)
{
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

/// Immutable after construction; `validate` checks every structural invariant.
struct Mesh {
    std::vector<Point> vertices;
    std::vector<Cell> cells;
    std::vector<BoundaryEdge> boundary_edges;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_cells() const { return cells.size(); }

    double cell_area(std::size_t c) const
    {
        const auto& k = cells[c];
        return signed_area(vertices[k[0]], vertices[k[1]], vertices[k[2]]);
    }

    double total_area() const
    {
        double s = 0.0;
        for (std::size_t c = 0; c < cells.size(); ++c)
            s += cell_area(c);
        return s;
    }

    double edge_length(const std::array<std::size_t, 2>& e) const
    {
        const auto& a = vertices[e[0]];
        const auto& b = vertices[e[1]];
        return std::hypot(b.x - a.x, b.y - a.y);
    }

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

inline std::uint64_t edge_key(std::size_t a, std::size_t b)
{
    if (a > b)
        std::swap(a, b);
    return (std::uint64_t(a) << 32) | std::uint64_t(b);
}

/// Checks positivity of cells, that the tagged edges are exactly the
/// boundary edges (each once), and the side each tag lives on. When
/// `strip_half_width` is given, G1 edges must also lie inside the strip.
inline void validate(const Mesh& m, std::optional<double> strip_half_width = std::nullopt)
{
    constexpr double geo_tol = 1e-12;
    for (std::size_t c = 0; c < m.cells.size(); ++c) {
        for (auto v : m.cells[c])
            if (v >= m.vertices.size())
                throw GeometryError("cell " + std::to_string(c) + " references a missing vertex");
        if (!(m.cell_area(c) > 0.0))
            throw GeometryError("cell " + std::to_string(c) + " has nonpositive signed area");
    }
    std::unordered_map<std::uint64_t, int> edge_count;
    for (const auto& k : m.cells)
        for (int i = 0; i < 3; ++i)
            ++edge_count[edge_key(k[i], k[(i + 1) % 3])];

    std::unordered_map<std::uint64_t, int> tagged;
    for (const auto& e : m.boundary_edges) {
        const auto key = edge_key(e.v[0], e.v[1]);
        auto it = edge_count.find(key);
        if (it == edge_count.end() || it->second != 1)
            throw TaggingError("tagged edge is not a boundary edge of exactly one cell");
        if (++tagged[key] > 1)
            throw TaggingError("boundary edge tagged more than once");
        const auto& a = m.vertices[e.v[0]];
        const auto& b = m.vertices[e.v[1]];
        bool ok = false;
        switch (e.tag) {
        case BoundaryTag::G1:
        case BoundaryTag::G2:
            ok = std::abs(a.y - 1.0) < geo_tol && std::abs(b.y - 1.0) < geo_tol;
            break;
        case BoundaryTag::G3:
            ok = (std::abs(a.x) < geo_tol && std::abs(b.x) < geo_tol) ||
                 (std::abs(a.x - 1.0) < geo_tol && std::abs(b.x - 1.0) < geo_tol);
            break;
        case BoundaryTag::G4:
            ok = std::abs(a.y) < geo_tol && std::abs(b.y) < geo_tol;
            break;
        }
        if (ok && e.tag == BoundaryTag::G1 && strip_half_width) {
            const double lo = 0.5 - *strip_half_width - geo_tol, hi = 0.5 + *strip_half_width + geo_tol;
            ok = a.x >= lo && a.x <= hi && b.x >= lo && b.x <= hi;
        }
        if (!ok)
            throw TaggingError("edge tagged " + tag_name(e.tag) + " does not lie on its boundary segment");
    }
    for (const auto& [key, count] : edge_count)
        if (count == 1 && !tagged.contains(key))
            throw TaggingError("untagged boundary edge");
}

namespace detail {

/// Node positions on [0, L] equidistributing the density g^(1 - d/L), d
/// measured from 0, so nodes cluster at d = 0.
inline std::vector<double> graded_nodes(double length, double g, int n)
{
    std::vector<double> d(std::size_t(n) + 1);
    const double lg = std::log(g);
    for (int k = 0; k <= n; ++k) {
        const double f = double(k) / n;
        if (g == 1.0) {
            d[std::size_t(k)] = f * length;
        } else {
            const double total = g * length / lg * (1.0 - 1.0 / g);
            const double target = f * total;
            d[std::size_t(k)] = -length / lg * std::log(1.0 - target * lg / (g * length));
        }
    }
    d.front() = 0.0;
    d.back() = length;
    return d;
}

inline double graded_mass(double length, double g)
{
    return g == 1.0 ? length : length * (g - 1.0) / std::log(g);
}

} // namespace detail

/// Structured triangulation of [0,1]^2 with geometric grading toward the
/// loaded strip. With grading 1 the grid is a tensor product; with grading
/// g > 1 columns are refined toward the strip (fading out toward the bottom)
/// and rows toward the top side.
inline Mesh generate_unit_square(const MeshSpec& spec)
{
    if (spec.resolution < 2)
        throw InvalidSpecError("mesh resolution must be >= 2");
    if (!(spec.grading >= 1.0))
        throw InvalidSpecError("mesh grading factor must be >= 1");
    const double w = spec.strip_half_width;
    if (!(w > 0.0 && w < 0.5))
        throw InvalidSpecError("strip half-width must lie in (0, 0.5)");

    const double g = spec.grading;
    const int res = spec.resolution;

    // Column positions on the top side.
    std::vector<double> top;
    const int n_strip = int(std::lround(res * 2.0 * w * g));
    if (n_strip < 1) {
        for (int i = 0; i <= res; ++i)
            top.push_back(double(i) / res);
    } else {
        const double side = 0.5 - w;
        const int n_side = std::max(1, int(std::lround(res * detail::graded_mass(side, g))));
        const auto d = detail::graded_nodes(side, g, n_side);
        for (int k = n_side; k >= 0; --k)
            top.push_back(side - d[std::size_t(k)]);
        top.front() = 0.0;
        top.back() = 0.5 - w;
        for (int k = 1; k <= n_strip; ++k)
            top.push_back((0.5 - w) + 2.0 * w * k / n_strip);
        top.back() = 0.5 + w;
        for (int k = 1; k <= n_side; ++k)
            top.push_back((0.5 + w) + d[std::size_t(k)]);
        top.back() = 1.0;
    }
    const int nx = int(top.size()) - 1;

    // Row positions, denser toward y = 1.
    const int ny = std::max(1, int(std::lround(res * detail::graded_mass(1.0, g))));
    std::vector<double> ys(std::size_t(ny) + 1);
    {
        const auto d = detail::graded_nodes(1.0, g, ny);
        for (int j = 0; j <= ny; ++j)
            ys[std::size_t(j)] = 1.0 - d[std::size_t(ny - j)];
        ys.front() = 0.0;
        ys.back() = 1.0;
    }

    Mesh m;
    m.vertices.reserve(std::size_t(nx + 1) * std::size_t(ny + 1));
    const bool blend = g > 1.0;
    for (int j = 0; j <= ny; ++j) {
        const double y = ys[std::size_t(j)];
        const double s = blend ? y : 1.0;
        for (int i = 0; i <= nx; ++i) {
            double x = (1.0 - s) * (double(i) / nx) + s * top[std::size_t(i)];
            if (i == 0)
                x = 0.0;
            if (i == nx)
                x = 1.0;
            m.vertices.push_back({x, y});
        }
    }
    auto id = [nx](int i, int j) { return std::size_t(j) * std::size_t(nx + 1) + std::size_t(i); };
    m.cells.reserve(std::size_t(2 * nx * ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const auto v00 = id(i, j), v10 = id(i + 1, j), v11 = id(i + 1, j + 1), v01 = id(i, j + 1);
            m.cells.push_back({v00, v10, v11});
            m.cells.push_back({v00, v11, v01});
        }
    for (int i = 0; i < nx; ++i)
        m.boundary_edges.push_back({{id(i, 0), id(i + 1, 0)}, BoundaryTag::G4});
    for (int j = 0; j < ny; ++j) {
        m.boundary_edges.push_back({{id(nx, j), id(nx, j + 1)}, BoundaryTag::G3});
        m.boundary_edges.push_back({{id(0, j + 1), id(0, j)}, BoundaryTag::G3});
    }
    for (int i = 0; i < nx; ++i) {
        const double xm = 0.5 * (m.vertices[id(i, ny)].x + m.vertices[id(i + 1, ny)].x);
        const bool loaded = xm >= 0.5 - w && xm <= 0.5 + w;
        m.boundary_edges.push_back({{id(i + 1, ny), id(i, ny)}, loaded ? BoundaryTag::G1 : BoundaryTag::G2});
    }
    validate(m, w);
    return m;
}

/// Sum of the lengths of edges carrying `tag`.
inline double boundary_measure(const Mesh& m, BoundaryTag tag)
{
    double s = 0.0;
    for (const auto& e : m.boundary_edges)
        if (e.tag == tag)
            s += m.edge_length(e.v);
    return s;
}

/// FNV-1a over the exact bit patterns of the mesh arrays.
inline std::string mesh_hash(const Mesh& m)
{
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& v : m.vertices) {
        mix(&v.x, sizeof v.x);
        mix(&v.y, sizeof v.y);
    }
    for (const auto& c : m.cells)
        for (auto v : c) {
            const std::uint64_t u = v;
            mix(&u, sizeof u);
        }
    for (const auto& e : m.boundary_edges) {
        const std::uint64_t u[3] = {e.v[0], e.v[1], std::uint64_t(tag_index(e.tag))};
        mix(u, sizeof u);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Gmsh MSH 2.2 ASCII subset.

inline void write_msh2(const Mesh& m, std::ostream& os)
{
    os << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    os << "$Nodes\n" << m.vertices.size() << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
        os << i + 1 << ' ' << m.vertices[i].x << ' ' << m.vertices[i].y << " 0\n";
    os << "$EndNodes\n$Elements\n" << m.boundary_edges.size() + m.cells.size() << '\n';
    std::size_t id = 1;
    for (const auto& e : m.boundary_edges) {
        const int t = tag_index(e.tag);
        os << id++ << " 1 2 " << t << ' ' << t << ' ' << e.v[0] + 1 << ' ' << e.v[1] + 1 << '\n';
    }
    for (const auto& c : m.cells)
        os << id++ << " 2 2 10 10 " << c[0] + 1 << ' ' << c[1] + 1 << ' ' << c[2] + 1 << '\n';
    os << "$EndElements\n";
}

inline void write_msh2(const Mesh& m, const std::string& path)
{
    std::ofstream f(path);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    write_msh2(m, f);
    if (!f)
        throw IoError("failed writing '" + path + "'");
}

inline Mesh read_msh2(std::istream& is)
{
    Mesh m;
    std::string line;
    bool have_format = false, have_nodes = false, have_elements = false;
    std::unordered_map<long, std::size_t> node_index;

    auto expect_end = [&](const std::string& end) {
        if (!std::getline(is, line) || line.rfind(end, 0) != 0)
            throw FormatError("expected " + end);
    };

    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line == "$MeshFormat") {
            if (!std::getline(is, line))
                throw FormatError("truncated $MeshFormat");
            std::istringstream ss(line);
            std::string version;
            int file_type = -1;
            ss >> version >> file_type;
            if (version != "2.2" && version != "2")
                throw FormatError("unsupported MSH version '" + version + "' (need 2.2)");
            if (file_type != 0)
                throw FormatError("binary MSH files are not supported");
            expect_end("$EndMeshFormat");
            have_format = true;
        } else if (line == "$Nodes") {
            if (!have_format)
                throw FormatError("$Nodes before $MeshFormat");
            std::size_t n = 0;
            if (!(is >> n))
                throw FormatError("bad node count");
            m.vertices.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                long id;
                double x, y, z;
                if (!(is >> id >> x >> y >> z))
                    throw FormatError("bad node record");
                if (z != 0.0)
                    throw FormatError("node with nonzero z-coordinate");
                if (!node_index.emplace(id, m.vertices.size()).second)
                    throw FormatError("duplicate node id");
                m.vertices.push_back({x, y});
            }
            std::getline(is, line);
            expect_end("$EndNodes");
            have_nodes = true;
        } else if (line == "$Elements") {
            if (!have_nodes)
                throw FormatError("$Elements before $Nodes");
            std::size_t n = 0;
            if (!(is >> n))
                throw FormatError("bad element count");
            std::getline(is, line);
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::getline(is, line))
                    throw FormatError("truncated $Elements");
                std::istringstream ss(line);
                long id;
                int type, ntags;
                if (!(ss >> id >> type >> ntags) || ntags < 0)
                    throw FormatError("bad element record");
                std::vector<long> tags(std::size_t(ntags), 0);
                for (auto& t : tags)
                    if (!(ss >> t))
                        throw FormatError("bad element tags");
                auto node = [&](long nid) {
                    auto it = node_index.find(nid);
                    if (it == node_index.end())
                        throw FormatError("element references unknown node " + std::to_string(nid));
                    return it->second;
                };
                if (type == 1) {
                    long a, b;
                    if (!(ss >> a >> b))
                        throw FormatError("bad line element");
                    const long phys = tags.empty() ? 0 : tags[0];
                    if (phys < 1 || phys > 4)
                        throw TaggingError("boundary line element without physical tag 1-4");
                    m.boundary_edges.push_back({{node(a), node(b)}, static_cast<BoundaryTag>(phys)});
                } else if (type == 2) {
                    long a, b, c;
                    if (!(ss >> a >> b >> c))
                        throw FormatError("bad triangle element");
                    m.cells.push_back({node(a), node(b), node(c)});
                } else if (type == 15) {
                    continue; // point elements carry no information we use
                } else {
                    throw FormatError("unsupported element type " + std::to_string(type));
                }
            }
            expect_end("$EndElements");
            have_elements = true;
        } else if (!line.empty() && line[0] == '$' && line.rfind("$End", 0) != 0) {
            // skip unknown section
            const std::string end = "$End" + line.substr(1);
            while (std::getline(is, line)) {
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                if (line == end)
                    break;
            }
        }
    }
    if (!have_format)
        throw FormatError("missing $MeshFormat section");
    if (!have_nodes || !have_elements)
        throw FormatError("missing $Nodes or $Elements section");
    validate(m);
    return m;
}

inline Mesh read_msh2(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open mesh file '" + path + "'");
    return read_msh2(f);
}

} // namespace pspl
