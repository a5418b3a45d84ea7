#pragma once

// Run-directory output: VTK legacy snapshots with a raw coefficient sidecar,
// CSV series and JSON summaries. Every file is written through a temporary
// and renamed into place.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspl/diagnostics.hpp"
#include "pspl/error.hpp"
#include "pspl/mesh.hpp"
#include "pspl/schemes.hpp"
#include "pspl/state.hpp"
#include "pspl/system.hpp"

namespace pspl::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_atomic(const fs::path& path, const std::string& bytes)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), std::streamsize(bytes.size()));
        os.flush();
        if (!os)
            throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// VTK legacy ASCII.

/// Unstructured grid with POINT_DATA p1, p2 and u at the mesh vertices (the
/// P2 field's vertex values; edge-midpoint values are only in the sidecar).
inline void write_vtk(std::ostream& os, const Mesh& mesh, const State& s, const std::string& title = "pspl snapshot")
{
    const std::size_t nv = mesh.num_vertices(), nc = mesh.num_cells();
    if (s.p1.size() < nv || s.p2.size() < nv || s.u.size() < 2 * nv)
        throw DimensionError("write_vtk: fields do not match the mesh");
    os << "# vtk DataFile Version 2.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << nv << " double\n";
    for (const auto& p : mesh.vertices)
        os << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
    os << "CELLS " << nc << ' ' << 4 * nc << '\n';
    for (const auto& c : mesh.cells)
        os << "3 " << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
    os << "CELL_TYPES " << nc << '\n';
    for (std::size_t c = 0; c < nc; ++c)
        os << "5\n";
    os << "POINT_DATA " << nv << '\n';
    for (const auto* name : {"p1", "p2"}) {
        const auto& f = std::string(name) == "p1" ? s.p1 : s.p2;
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (std::size_t i = 0; i < nv; ++i)
            os << format_double(f[i]) << '\n';
    }
    os << "VECTORS u double\n";
    for (std::size_t i = 0; i < nv; ++i)
        os << format_double(s.u[2 * i]) << ' ' << format_double(s.u[2 * i + 1]) << " 0\n";
}

// ---------------------------------------------------------------------------
// Coefficient sidecar: "PSPL", u32 version, u64 count, then count
// little-endian doubles (u, p1, p2 in dof order).

inline constexpr std::uint32_t sidecar_version = 1;

struct Coefficients {
    Vector u, p1, p2;
};

namespace detail {
template <class T>
void put_le(std::string& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw FormatError("sidecar truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}
} // namespace detail

inline std::string encode_sidecar(const State& s)
{
    std::string out = "PSPL";
    detail::put_le<std::uint32_t>(out, sidecar_version);
    detail::put_le<std::uint64_t>(out, s.u.size() + s.p1.size() + s.p2.size());
    for (const auto* f : {&s.u, &s.p1, &s.p2})
        for (double v : *f)
            detail::put_le<double>(out, v);
    return out;
}

/// Splits the payload using the expected field sizes.
inline Coefficients decode_sidecar(const std::string& bytes, std::size_t nu, std::size_t np)
{
    if (bytes.size() < 16 || bytes.compare(0, 4, "PSPL") != 0)
        throw FormatError("not a PSPL sidecar");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != sidecar_version)
        throw FormatError("unsupported sidecar version " + std::to_string(version));
    const auto count = detail::get_le<std::uint64_t>(bytes, pos);
    if (count != nu + 2 * np)
        throw DimensionError("sidecar holds " + std::to_string(count) + " values, expected " +
                             std::to_string(nu + 2 * np));
    if (bytes.size() != 16 + 8 * count)
        throw FormatError("sidecar size does not match its header");
    Coefficients c;
    c.u.resize(nu);
    c.p1.resize(np);
    c.p2.resize(np);
    for (auto* f : {&c.u, &c.p1, &c.p2})
        for (double& v : *f)
            v = detail::get_le<double>(bytes, pos);
    return c;
}

// ---------------------------------------------------------------------------
// CSV.

inline std::string energies_csv(const std::vector<EnergyRecord>& recs)
{
    std::string out = "n,t,two_level_energy,three_level_energy\n";
    for (const auto& r : recs) {
        out += std::to_string(r.n) + ',' + format_double(r.t) + ',' + format_double(r.two_level_energy) + ',';
        if (r.three_level_energy)
            out += format_double(*r.three_level_energy);
        out += '\n';
    }
    return out;
}

inline std::string errors_csv(const ErrorSeries& e)
{
    std::string out = "t,eps_u,eps_p1,eps_p2\n";
    for (std::size_t i = 0; i < e.t.size(); ++i)
        out += format_double(e.t[i]) + ',' + format_double(e.eps_u[i]) + ',' + format_double(e.eps_p1[i]) + ',' +
               format_double(e.eps_p2[i]) + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Run directories.

struct SnapshotEntry {
    std::size_t n = 0;
    double t = 0.0;
    std::string vtk;     ///< file name relative to the run directory
    std::string sidecar;
};

inline json to_json(const SnapshotEntry& e)
{
    return json{{"n", e.n}, {"t", e.t}, {"vtk", e.vtk}, {"sidecar", e.sidecar}};
}

/// Sink writing snapshots as they arrive and collecting energies.
class RunDirectory : public RunSink {
public:
    RunDirectory(fs::path dir, const Mesh& mesh) : dir_(std::move(dir)), mesh_(&mesh)
    {
        fs::create_directories(dir_);
    }

    void on_energy(const EnergyRecord& r) override { energies_.push_back(r); }

    void on_snapshot(const State& s) override
    {
        char base[32];
        std::snprintf(base, sizeof base, "snapshot_%06zu", s.n);
        SnapshotEntry e{s.n, s.t, std::string(base) + ".vtk", std::string(base) + ".pspl"};
        std::ostringstream os;
        write_vtk(os, *mesh_, s, "pspl snapshot n=" + std::to_string(s.n) + " t=" + format_double(s.t));
        write_atomic(dir_ / e.vtk, os.str());
        write_atomic(dir_ / e.sidecar, encode_sidecar(s));
        snapshots_.push_back(std::move(e));
    }

    const fs::path& dir() const { return dir_; }
    const std::vector<EnergyRecord>& energies() const { return energies_; }
    const std::vector<SnapshotEntry>& snapshots() const { return snapshots_; }

    void write_energies() const { write_atomic(dir_ / "energies.csv", energies_csv(energies_)); }

    json snapshot_list() const
    {
        json a = json::array();
        for (const auto& e : snapshots_)
            a.push_back(to_json(e));
        return a;
    }

private:
    fs::path dir_;
    const Mesh* mesh_;
    std::vector<EnergyRecord> energies_;
    std::vector<SnapshotEntry> snapshots_;
};

/// A finished run directory as read back from disk.
struct RunRecord {
    fs::path dir;
    json summary;
    Mesh mesh;
    double tau = 0.0;
    std::vector<SnapshotEntry> snapshots;
};

inline RunRecord read_run(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("run directory not found: " + dir.string());
    RunRecord r;
    r.dir = dir;
    try {
        r.summary = json::parse(read_file(dir / "summary.json"));
        r.tau = r.summary.at("tau").get<double>();
        for (const auto& s : r.summary.at("snapshots"))
            r.snapshots.push_back(SnapshotEntry{s.at("n").get<std::size_t>(), s.at("t").get<double>(),
                                                s.at("vtk").get<std::string>(), s.at("sidecar").get<std::string>()});
    } catch (const json::exception& e) {
        throw FormatError("malformed summary.json in " + dir.string() + ": " + e.what());
    }
    r.mesh = read_msh2((dir / "mesh.msh").string());
    return r;
}

inline Coefficients load_snapshot(const RunRecord& r, const SnapshotEntry& e, std::size_t nu, std::size_t np)
{
    const fs::path p = r.dir / e.sidecar;
    if (!fs::exists(p))
        throw IoError("missing snapshot file " + p.string());
    return decode_sidecar(read_file(p), nu, np);
}

} // namespace pspl::io
