#include <doctest.h>

#include "sceneprior/gradcheck.hpp"

using namespace sceneprior;

TEST_CASE("gradient suite passes at reduced size") {
  GradcheckOptions opt;
  opt.primitive_points = 10;
  opt.seed = 3;
  GradcheckReport r = run_gradcheck_suite(opt);
  for (const auto& e : r.entries) {
    INFO(e.subsystem << "/" << e.name << " " << e.max_rel_error);
    CHECK(e.passed());
    CHECK(e.points > 0);
  }
  CHECK(r.passed());
  CHECK(r.max_error("primitive") < 1e-6);
  CHECK(r.max_error("composite") < 1e-4);
  CHECK(r.max_error("renderer") < 1e-3);
  const auto j = to_json(r);
  CHECK(j.at("passed").get<bool>());
  CHECK(j.at("checks").size() == r.entries.size());
}
