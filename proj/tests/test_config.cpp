#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "epiwave/config.hpp"

using namespace epiwave;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "epiwave_test_config";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST(Config, CanonicalFormRoundTrips) {
  Config c;
  c.apply_override("grid.dx=0.1");
  c.apply_override("wave.factors=[1.0, 1.25]");
  const auto again = Config::from_toml(c.canonical());
  EXPECT_EQ(again.canonical(), c.canonical());
  EXPECT_EQ(again.hash(), c.hash());
  EXPECT_NE(Config().hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(Config, OverridesParseTomlValues) {
  Config c;
  c.apply_override("S0 = 2");
  c.apply_override("kernel.preset=laplace");
  c.apply_override("kernel.b=0.25");
  c.apply_override("simulate.recursion=true");
  c.apply_override("spread.levels=[0.2, 0.7]");
  c.apply_override("rates.tau_file='a b.csv'");
  EXPECT_DOUBLE_EQ(c.number("S0"), 2.0);
  EXPECT_EQ(c.text("kernel.preset"), "laplace");
  EXPECT_DOUBLE_EQ(c.number("kernel.b"), 0.25);
  EXPECT_TRUE(c.get<bool>("simulate.recursion"));
  EXPECT_EQ(c.list("spread.levels"), (std::vector<double>{0.2, 0.7}));
  EXPECT_EQ(c.text("rates.tau_file"), "a b.csv");
}

TEST(Config, UnknownKeysAndWrongTypesAreRejected) {
  Config c;
  EXPECT_THROW(c.apply_override("grid.dy=1"), ConfigError);
  EXPECT_THROW(c.apply_override("grid.dx=true"), ConfigError);
  EXPECT_THROW(c.apply_override("grid.dx"), ConfigError);
  EXPECT_THROW(Config::from_toml("[grid]\nnope = 1\n"), ConfigError);
  EXPECT_THROW(Config::from_toml("[grid\ndx = 1\n"), ConfigError);
  EXPECT_THROW(Config::from_json("{\"grid\": {\"dx\": \"wide\"}}"), ConfigError);
}

TEST(Config, TomlAndJsonFilesAgree) {
  const auto t = scratch("a.toml"), j = scratch("a.json");
  write(t, "S0 = 1.5\n[rates]\ntau0 = 3\n[init.I0]\nheight = 0.5\n");
  write(j, R"({"S0": 1.5, "rates": {"tau0": 3.0}, "init": {"I0": {"height": 0.5}}})");
  const auto a = Config::from_file(t), b = Config::from_file(j);
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_DOUBLE_EQ(a.number("rates.tau0"), 3.0);
  EXPECT_DOUBLE_EQ(make_initial_data(a).I0->height, 0.5);
}

TEST(Config, ValidationCatchesBadValues) {
  Config c;
  validate_config(c);
  c.apply_override("spread.levels=[0.5, 1.0]");
  EXPECT_THROW(validate_config(c), ConfigError);
  Config k;
  k.apply_override("kernel.preset=uniform");
  EXPECT_THROW(validate_config(k), ConfigError);
  Config b;
  b.apply_override("init.I0.i_hi=-1");
  EXPECT_THROW(validate_config(b), ConfigError);
}

TEST(Config, TabulatedInputsLoadFromCsv) {
  const auto tau = scratch("tau.csv"), gamma = scratch("gamma.csv"), kern = scratch("k.csv");
  write(tau, "# age, tau\nage,tau\n0,2\n1,2\n2,1\n4,0\n");
  write(gamma, "0 1\n1 1\n2 1\n4 1\n");
  write(kern, "0,1\n1,0.6\n2,0.2\n4,0.01\n6,0.0005\n");
  Config c;
  c.apply_override("rates.preset=tabulated");
  c.apply_override("rates.tau_file=" + tau.string());
  c.apply_override("rates.gamma_file=" + gamma.string());
  c.apply_override("kernel.preset=tabulated");
  c.apply_override("kernel.file=" + kern.string());
  validate_config(c);
  const auto m = make_rate_model(c);
  EXPECT_DOUBLE_EQ(m.age_max(), 4.0);
  EXPECT_NEAR(m.pi()[50], std::exp(-1.0), 1e-12);
  c.apply_override("rates.pi_file=" + gamma.string());
  EXPECT_THROW(make_rate_preset(c), ConfigError);
}

TEST(Config, CsvReaderSkipsCommentsAndHeader) {
  const auto p = scratch("c.csv");
  write(p, "x;y\n# note\n1;2\n\n3\t4 # trailing\n");
  const auto [a, b] = io::read_two_column_csv(p);
  EXPECT_EQ(a, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(b, (std::vector<double>{2.0, 4.0}));
  write(p, "1,2\nbad,row\n");
  EXPECT_THROW(io::read_two_column_csv(p), ConfigError);
}
