#include "delayctl/spec_io.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "delayctl/demos.hpp"
#include "delayctl/errors.hpp"

#ifndef DELAYCTL_SPEC_DIR
#define DELAYCTL_SPEC_DIR "data/specs"
#endif

namespace delayctl {
namespace {

std::string spec_path(const std::string& name) { return std::string(DELAYCTL_SPEC_DIR) + "/" + name + ".json"; }

// The JSON files mirror the C++ demos: same matrices, same costs.
GTEST_TEST(SpecIo, FilesMatchDemos) {
  for (const std::string& name : demos::names()) {
    SCOPED_TRACE(name);
    const ProblemSpec a = load_spec(spec_path(name));
    const ProblemSpec b = demos::by_name(name);
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.a0, b.a0);
    EXPECT_EQ(a.b0, b.b0);
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_EQ(a.d, b.d);
    EXPECT_EQ(a.T, b.T);
    EXPECT_TRUE(a.b1.total_mass().isApprox(b.b1.total_mass()) || b.b1.total_mass().isZero());
    EXPECT_EQ(a.b1.atoms().size(), b.b1.atoms().size());
    EXPECT_EQ(a.initial.y0, b.initial.y0);
    for (double y : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
      const VectorXd yy = VectorXd::Constant(a.n, y);
      EXPECT_NEAR(a.cost.terminal.value(yy), b.cost.terminal.value(yy), 1e-14);
      EXPECT_NEAR(a.cost.running.value(0.3, yy), b.cost.running.value(0.3, yy), 1e-14);
      const VectorXd u = VectorXd::Constant(a.m, std::clamp(y, -1.0, 1.0));
      if (a.U.contains(u)) EXPECT_NEAR(a.cost.control.value(u), b.cost.control.value(u), 1e-14);
    }
    for (double s : {-0.5, -0.25, -0.01}) {
      EXPECT_NEAR((a.initial.u0.value(s) - b.initial.u0.value(s)).norm(), 0.0, 1e-14);
    }
  }
}

GTEST_TEST(SpecIo, MatrixLayouts) {
  MatrixXd expect(2, 2);
  expect << 1, 2, 3, 4;
  EXPECT_EQ(json_matrix(Json::parse("[[1,2],[3,4]]"), 2, 2, "a"), expect);
  EXPECT_EQ(json_matrix(Json::parse("[1,2,3,4]"), 2, 2, "a"), expect);
  EXPECT_EQ(json_matrix(Json::parse("5"), 1, 1, "a")(0, 0), 5.0);
  EXPECT_THROW(json_matrix(Json::parse("[1,2,3]"), 2, 2, "a"), ConfigError);
  EXPECT_THROW(json_matrix(Json::parse("\"x\""), 1, 1, "a"), ConfigError);
}

GTEST_TEST(SpecIo, ErrorsAreConfigErrors) {
  Json j = load_json(spec_path("scalar"));
  j.erase("sigma");
  EXPECT_THROW(spec_from_json(j), ConfigError);
  Json bad = load_json(spec_path("scalar"));
  bad["d"] = -1.0;
  EXPECT_THROW(spec_from_json(bad), ValidationError);
  EXPECT_THROW(load_spec("/nonexistent/spec.json"), ConfigError);
}

GTEST_TEST(SpecIo, ExpressionCostsCarryMetadata) {
  const ProblemSpec s = load_spec(spec_path("running_cost"));
  EXPECT_FALSE(s.cost.running.spatially_constant);
  ASSERT_TRUE(s.cost.running.bound.has_value());
  EXPECT_TRUE(s.cost.control.lipschitz_selection_certified);
  const ProblemSpec c = load_spec(spec_path("closed_form"));
  EXPECT_EQ(c.cost.terminal.growth_degree, 2);
  EXPECT_NEAR(c.cost.terminal.gradient(VectorXd::Constant(1, 1.5))(0), 3.0, 1e-15);
}

GTEST_TEST(SpecIo, HashIsStable) {
  const Json j = load_json(spec_path("scalar"));
  EXPECT_EQ(config_hash(j), config_hash(load_json(spec_path("scalar"))));
  EXPECT_NE(config_hash(j), config_hash(load_json(spec_path("pointwise_delay"))));
  EXPECT_EQ(config_hash(j).size(), 16u);
}

}  // namespace
}  // namespace delayctl
