#include <gtest/gtest.h>

#include <unistd.h>

#include "cli_support.hpp"
#include "pspl/compare.hpp"
#include "pspl/io.hpp"
#include "support.hpp"

namespace {

using namespace pspl;
using test::cli;
using test::ScratchDir;

State sample_state(const SystemOperators& ops)
{
    State s;
    s.n = 7;
    s.t = 0.035;
    s.u = test::random_vector(ops.nu(), 1, 1e-7);
    s.p1 = test::random_vector(ops.np(), 2);
    s.p2 = test::random_vector(ops.np(), 3);
    return s;
}

TEST(Sidecar, RoundtripIsBitExact)
{
    const auto ops = test::tiny_system(3);
    State s = sample_state(ops);
    s.u[0] = -0.0;
    s.u[1] = std::numeric_limits<double>::denorm_min();
    s.p1[0] = 1.7976931348623157e308;
    const auto c = io::decode_sidecar(io::encode_sidecar(s), ops.nu(), ops.np());
    ASSERT_EQ(c.u.size(), s.u.size());
    EXPECT_EQ(std::memcmp(c.u.data(), s.u.data(), 8 * s.u.size()), 0);
    EXPECT_EQ(c.p1, s.p1);
    EXPECT_EQ(c.p2, s.p2);
}

TEST(Sidecar, HeaderLayout)
{
    State s;
    s.u = {1.0, 2.0};
    s.p1 = {3.0};
    s.p2 = {4.0};
    const std::string b = io::encode_sidecar(s);
    ASSERT_EQ(b.size(), 16u + 4u * 8u);
    EXPECT_EQ(b.substr(0, 4), "PSPL");
    const unsigned char version[4] = {1, 0, 0, 0};
    EXPECT_EQ(std::memcmp(b.data() + 4, version, 4), 0);
    const unsigned char count[8] = {4, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(std::memcmp(b.data() + 8, count, 8), 0);
    // 1.0 as little-endian IEEE double
    const unsigned char one[8] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
    EXPECT_EQ(std::memcmp(b.data() + 16, one, 8), 0);
}

TEST(Sidecar, RejectsMalformedInput)
{
    State s;
    s.u = {1.0, 2.0};
    s.p1 = {3.0};
    s.p2 = {4.0};
    std::string b = io::encode_sidecar(s);
    std::string bad = b;
    bad[0] = 'X';
    EXPECT_THROW(io::decode_sidecar(bad, 2, 1), FormatError);
    EXPECT_THROW(io::decode_sidecar(b.substr(0, b.size() - 3), 2, 1), FormatError);
    EXPECT_THROW(io::decode_sidecar(b, 4, 1), DimensionError);
    bad = b;
    bad[4] = 2;
    EXPECT_THROW(io::decode_sidecar(bad, 2, 1), FormatError);
}

TEST(Vtk, StructureMatchesMesh)
{
    const auto ops = test::tiny_system(3);
    std::ostringstream os;
    io::write_vtk(os, ops.mesh, sample_state(ops));
    const std::string text = os.str();
    EXPECT_EQ(text.rfind("# vtk DataFile Version 2.0\n", 0), 0u);
    const auto nv = ops.mesh.num_vertices(), nc = ops.mesh.num_cells();
    EXPECT_NE(text.find("DATASET UNSTRUCTURED_GRID\n"), std::string::npos);
    EXPECT_NE(text.find("POINTS " + std::to_string(nv) + " double\n"), std::string::npos);
    EXPECT_NE(text.find("CELLS " + std::to_string(nc) + " " + std::to_string(4 * nc) + "\n"), std::string::npos);
    EXPECT_NE(text.find("CELL_TYPES " + std::to_string(nc) + "\n"), std::string::npos);
    EXPECT_NE(text.find("POINT_DATA " + std::to_string(nv) + "\n"), std::string::npos);
    EXPECT_NE(text.find("SCALARS p1 double 1\n"), std::string::npos);
    EXPECT_NE(text.find("SCALARS p2 double 1\n"), std::string::npos);
    EXPECT_NE(text.find("VECTORS u double\n"), std::string::npos);
    const auto lines = std::count(text.begin(), text.end(), '\n');
    // header 4, points 1 + nv, cells 1 + nc, types 1 + nc, point data 1, 2 x (2 + nv), vectors 1 + nv
    EXPECT_EQ(std::size_t(lines), 4 + 1 + nv + 1 + nc + 1 + nc + 1 + 2 * (2 + nv) + 1 + nv);
}

TEST(Csv, EnergiesAndErrors)
{
    std::vector<EnergyRecord> recs{{0, 0.0, 1.5, std::nullopt, true}, {1, 0.01, 1.25, 2.0, true}};
    EXPECT_EQ(io::energies_csv(recs), "n,t,two_level_energy,three_level_energy\n0,0,1.5,\n1,0.01,1.25,2\n");
    ErrorSeries e;
    e.t = {0.5};
    e.eps_u = {1e-3};
    e.eps_p1 = {0.25};
    e.eps_p2 = {0.0};
    EXPECT_EQ(io::errors_csv(e), "t,eps_u,eps_p1,eps_p2\n0.5,0.001,0.25,0\n");
}

TEST(WriteAtomic, ReplacesContentWithoutLeftovers)
{
    ScratchDir d("atomic");
    const auto p = d.path() / "sub" / "f.txt";
    io::write_atomic(p, "first");
    io::write_atomic(p, "second");
    EXPECT_EQ(io::read_file(p), "second");
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(p.parent_path())) {
        (void)e;
        ++files;
    }
    EXPECT_EQ(files, 1u);
}

// ---------------------------------------------------------------------------
// Stored runs and comparisons. The runs are shared by the tests below.

class StoredRuns : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = new ScratchDir("runs");
        const std::vector<std::string> mesh{"--res", "6", "--grade", "2"};
        auto go = [&](const std::string& name, std::vector<std::string> extra, const std::string& t_end = "0.1") {
            std::vector<std::string> a{"--deterministic", "run", "--t-end", t_end};
            a.insert(a.end(), mesh.begin(), mesh.end());
            a.insert(a.end(), extra.begin(), extra.end());
            a.push_back("--out");
            a.push_back(*dir_ / name);
            testing::internal::CaptureStdout();
            const int code = cli(a);
            testing::internal::GetCapturedStdout();
            ASSERT_EQ(code, 0) << name;
        };
        go("coarse", {"--tau", "0.02", "--snapshot-every", "1"});
        go("coarse_again", {"--tau", "0.02", "--snapshot-every", "1"});
        go("medium", {"--tau", "0.01", "--snapshot-every", "2"});
        go("etalon", {"--tau", "0.0025", "--snapshot-every", "1"});
        go("odd", {"--tau", "0.03", "--snapshot-every", "1"}, "0.06");
        // a different mesh
        std::vector<std::string> a{"run", "--res", "8", "--grade", "2", "--t-end", "0.1", "--tau", "0.02",
                                   "--snapshot-every", "1", "--out", *dir_ / "other_mesh"};
        testing::internal::CaptureStdout();
        ASSERT_EQ(cli(a), 0);
        testing::internal::GetCapturedStdout();
    }
    static void TearDownTestSuite()
    {
        delete dir_;
        dir_ = nullptr;
    }

    static std::filesystem::path at(const std::string& name) { return dir_->path() / name; }

    static ScratchDir* dir_;
};

ScratchDir* StoredRuns::dir_ = nullptr;

TEST_F(StoredRuns, SelfComparisonIsZero)
{
    const auto e = compare_trajectories(at("coarse"), at("coarse"));
    ASSERT_EQ(e.t.size(), 6u);
    for (std::size_t i = 0; i < e.t.size(); ++i) {
        EXPECT_EQ(e.eps_u[i], 0.0);
        EXPECT_EQ(e.eps_p1[i], 0.0);
        EXPECT_EQ(e.eps_p2[i], 0.0);
    }
}

TEST_F(StoredRuns, CoarserStepHasLargerErrors)
{
    const auto a = compare_trajectories(at("coarse"), at("etalon"));
    const auto b = compare_trajectories(at("medium"), at("etalon"));
    ASSERT_EQ(a.t.size(), b.t.size());
    for (std::size_t i = 1; i < a.t.size(); ++i) {
        ASSERT_NEAR(a.t[i], b.t[i], 1e-12);
        EXPECT_GE(a.eps_p1[i], b.eps_p1[i]) << a.t[i];
        EXPECT_GE(a.eps_p2[i], b.eps_p2[i]) << a.t[i];
        EXPECT_GE(a.eps_u[i], b.eps_u[i]) << a.t[i];
    }
}

TEST_F(StoredRuns, DeterministicRunsAreByteIdentical)
{
    for (const auto& e : std::filesystem::directory_iterator(at("coarse"))) {
        const auto name = e.path().filename().string();
        if (name == "summary.json")
            continue; // holds timings
        EXPECT_EQ(io::read_file(e.path()), io::read_file(at("coarse_again") / name)) << name;
    }
}

TEST_F(StoredRuns, SummaryHasRequiredFields)
{
    const auto r = io::read_run(at("coarse"));
    for (const char* key : {"scheme", "theta", "tau", "mesh_hash", "parameter_set", "timings", "status", "solver"})
        EXPECT_TRUE(r.summary.contains(key)) << key;
    EXPECT_EQ(r.summary["mesh_hash"].get<std::string>(), mesh_hash(r.mesh));
    EXPECT_TRUE(std::filesystem::exists(at("coarse") / "energies.csv"));
}

TEST_F(StoredRuns, MeshMismatchIsRejected)
{
    EXPECT_THROW(compare_trajectories(at("other_mesh"), at("etalon")), IncompatibleError);
}

TEST_F(StoredRuns, InterpolatedComparisonAcrossMeshes)
{
    CompareOptions opt;
    opt.interpolate = true;
    const auto e = compare_trajectories(at("other_mesh"), at("coarse"), opt);
    ASSERT_EQ(e.t.size(), 6u);
    for (double v : e.eps_p1)
        EXPECT_TRUE(std::isfinite(v));
}

TEST_F(StoredRuns, IncompatibleTimeGridIsRejected)
{
    EXPECT_THROW(compare_trajectories(at("coarse"), at("odd")), IncompatibleError);
}

TEST_F(StoredRuns, MissingSnapshotFileIsReported)
{
    ScratchDir d("missing");
    std::filesystem::copy(at("medium"), d.path() / "run", std::filesystem::copy_options::recursive);
    std::filesystem::remove(d.path() / "run" / "snapshot_000004.pspl");
    EXPECT_THROW(compare_trajectories(d.path() / "run", at("etalon")), IoError);
}

TEST_F(StoredRuns, MissingDirectoryIsReported)
{
    EXPECT_THROW(compare_trajectories(at("nope"), at("etalon")), IoError);
}

} // namespace
