#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace fopca;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("fopca_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Io, ShortestRoundTripFormatting) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(-2.0), "-2");
  EXPECT_EQ(io::format_double(std::nan("")), "");
  random::Stream s(1, 0, 9u);
  for (int i = 0; i < 1000; ++i) {
    const double v = s.normal() * std::pow(10.0, 20 * (s.uniform() - 0.5));
    EXPECT_EQ(io::parse_double(io::format_double(v), 1, 1), v);
  }
}

TEST(Io, CsvRoundTripIsExact) {
  const Matrix m = testutil::gaussian(7, 5, 3);
  std::stringstream ss;
  io::write_csv(ss, m);
  const io::CsvTable t = io::read_csv(ss, false);
  EXPECT_TRUE((t.values.array() == m.array()).all());
}

TEST(Io, CsvHeaderAndErrors) {
  std::stringstream ok("a,b\n1,2\n\n3,4\n");
  const io::CsvTable t = io::read_csv(ok, true);
  ASSERT_EQ(t.header.size(), 2u);
  EXPECT_EQ(t.header[1], "b");
  EXPECT_EQ(t.values(1, 0), 3.0);
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(io::read_csv(ragged, false), Error);
  std::stringstream junk("1,x\n");
  try {
    io::read_csv(junk, false);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::input);
  }
}

TEST(Io, BinaryPanelRoundTrip) {
  const fs::path dir = scratch("bin");
  const Panel x(testutil::gaussian(6, 9, 4));
  io::write_panel_binary(dir / "x.bin", x);
  EXPECT_EQ(fs::file_size(dir / "x.bin"), 16u + 8u * 54u);
  const Panel y = io::read_panel_binary(dir / "x.bin");
  EXPECT_TRUE((x.data().array() == y.data().array()).all());
  // Header is N then T, little-endian.
  std::ifstream in(dir / "x.bin", std::ios::binary);
  std::uint64_t dims[2];
  in.read(reinterpret_cast<char *>(dims), sizeof dims);
  EXPECT_EQ(dims[0], 6u);
  EXPECT_EQ(dims[1], 9u);
  fs::remove_all(dir);
}

TEST(Io, SaveFit) {
  const fs::path dir = scratch("fit");
  const PcaFit f = fit(Panel(testutil::gaussian(8, 11, 5)), 3);
  io::save_fit(dir, f);
  const Matrix b = io::read_csv(dir / "b_hat.csv", false).values;
  EXPECT_TRUE((b.array() == f.b_hat.array()).all());
  EXPECT_EQ(io::read_csv(dir / "f_hat.csv", false).values.rows(), 11);
  EXPECT_EQ(io::read_csv(dir / "singular_values.csv", false).values.rows(), 3);
  std::ifstream m(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(m)), {});
  EXPECT_NE(text.find("\"R\": 3"), std::string::npos);
  fs::remove_all(dir);
}
