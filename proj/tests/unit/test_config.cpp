#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "headneck/config.hpp"

using namespace headneck;
using namespace headneck::config;
using nlohmann::json;

namespace {

std::string error_of(const json& j) {
  try {
    from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = from_json(json::object());
  const RunConfig d;
  EXPECT_EQ(to_json(c), to_json(d));
  EXPECT_EQ(c.weights.flat(), mpc::WeightVector::optimized().flat());
  EXPECT_EQ(c.ga_config().dimension(), 10u);
  EXPECT_EQ(c.ga_config().objectives, analysis::kFevals);
}

TEST(Config, RoundTripThroughJson) {
  json j = {{"mpc", {{"control_period", 0.04}, {"preview", "full"}}},
            {"weights", {{"preset", "sagittal_prior"}, {"wz2", 7.5}}},
            {"integrators", {{"preset", "muscle"}, {"windup_limit", 0.5}}},
            {"io", {{"seed", 42}}},
            {"ga", {{"lower", 0.5}, {"log_space", true}}}};
  const RunConfig a = from_json(j);
  EXPECT_EQ(a.mpc.control_period, 0.04);
  EXPECT_EQ(a.mpc.preview, mpc::Preview::Full);
  EXPECT_EQ(a.weights.flat()[9], 7.5);
  EXPECT_EQ(a.integrators.windup_limit, 0.5);
  EXPECT_EQ(a.ga_config().seed, 42u);
  EXPECT_EQ(a.forest_config().seed, 42u);
  for (double l : a.ga.ga.lower) EXPECT_EQ(l, 0.5);
  const RunConfig b = from_json(to_json(a));
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(hash(a), hash(b));
}

TEST(Config, UnknownKeysNameTheSection) {
  EXPECT_NE(error_of({{"plnat", json::object()}}).find("unknown key 'plnat'"), std::string::npos);
  const std::string e = error_of({{"plant", {{"head_mas", 5.0}}}});
  EXPECT_NE(e.find("head_mas"), std::string::npos);
  EXPECT_NE(e.find("plant"), std::string::npos);
}

TEST(Config, TypeAndValueErrors) {
  EXPECT_NE(error_of({{"plant", {{"head_mass", "heavy"}}}}).find("plant.head_mass"), std::string::npos);
  EXPECT_NE(error_of({{"plant", {{"passive_stiffness", {1, 2}}}}}).find("plant.passive_stiffness"), std::string::npos);
  EXPECT_NE(error_of({{"mpc", {{"preview", "half"}}}}).find("mpc.preview"), std::string::npos);
  EXPECT_NE(error_of({{"weights", {{"preset", "best"}}}}).find("weights.preset"), std::string::npos);
  EXPECT_NE(error_of({{"plant", 3}}).find("plant"), std::string::npos);
  EXPECT_FALSE(error_of({{"simulation", {{"duration", 100.0}}}}).empty());
  EXPECT_FALSE(error_of({{"plant", {{"head_mass", -1.0}}}}).empty());
  EXPECT_FALSE(error_of({{"ga", {{"lower", {1.0, 2.0}}}}}).empty());
  EXPECT_FALSE(error_of({{"io", {{"seed", -3}}}}).empty());
}

TEST(Config, HashIsStableAndSensitive) {
  const RunConfig a;
  EXPECT_EQ(hash(a).size(), 16u);
  EXPECT_EQ(hash(a), hash(RunConfig{}));
  RunConfig b;
  b.plant.head_mass += 1e-12;
  EXPECT_NE(hash(a), hash(b));
  RunConfig c;
  c.io.out_dir = "elsewhere";
  c.io.plot = true;
  EXPECT_EQ(hash(a), hash(c));
  // Reference FNV-1a values.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, ToyProblemDefaults) {
  const RunConfig c = from_json({{"ga", {{"problem", "toy"}}}});
  EXPECT_EQ(c.ga_config().dimension(), 1u);
  EXPECT_EQ(c.ga_config().objectives, 2);
}

TEST(Config, PerturbationKinds) {
  RunConfig c = from_json({{"perturbation", {{"kind", "pulse"}}}});
  const auto b = c.perturbation.build(c.simulation.dt);
  EXPECT_GT(b.ay.size(), 0u);
  c = from_json({{"perturbation", {{"kind", "stationary"}}}});
  for (double a : c.perturbation.build(0.01).ay) EXPECT_EQ(a, 0.0);
}

TEST(Config, LoadsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "headneck_test_config.json";
  {
    std::ofstream out(path);
    out << R"({"io": {"seed": 9}})";
  }
  EXPECT_EQ(load(path).io.seed, 9u);
  {
    std::ofstream out(path);
    out << "{not json";
  }
  EXPECT_THROW(load(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load(path), ConfigError);
}
