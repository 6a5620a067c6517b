#include "graphpatch/config.hpp"
#include "graphpatch/tensor.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <json.hpp>

using namespace gp;

namespace {

RunConfig make() {
  return RunConfig({{"data", ValueKind::kString, ""},
                    {"lr", ValueKind::kFloat, "0.01"},
                    {"epochs", ValueKind::kInt, "200"},
                    {"seed", ValueKind::kUnsigned, "0"},
                    {"detach", ValueKind::kBool, "false"}});
}

}  // namespace

TEST_CASE("defaults and unset keys") {
  const RunConfig cfg = make();
  CHECK(cfg.get_double("lr") == 0.01);
  CHECK(cfg.get_int("epochs") == 200);
  CHECK_FALSE(cfg.get_bool("detach"));
  CHECK_FALSE(cfg.has("data"));
  CHECK_THROWS_WITH_AS(cfg.get_string("data"), "missing required setting 'data'", Error);
}

TEST_CASE("load_text") {
  RunConfig cfg = make();
  cfg.load_text("# run settings\n"
                "data = \"runs/my data\"   # quoted\n"
                "\n"
                "  lr=0.5\n"
                "detach = true\n"
                "seed = 18446744073709551615\n");
  CHECK(cfg.get_string("data") == "runs/my data");
  CHECK(cfg.get_double("lr") == 0.5);
  CHECK(cfg.get_bool("detach"));
  CHECK(cfg.get_unsigned("seed") == 18446744073709551615ull);

  SUBCASE("later settings win") {
    cfg.set("lr", "0.25");
    CHECK(cfg.get_double("lr") == 0.25);
  }
  SUBCASE("json keeps schema order and types") {
    const auto j = nlohmann::ordered_json::parse(cfg.to_json());
    CHECK(j.begin().key() == "data");
    CHECK(j["epochs"].is_number_integer());
    CHECK(j["lr"].is_number_float());
    CHECK(j["detach"].is_boolean());
  }
}

TEST_CASE("errors") {
  RunConfig cfg = make();
  CHECK_THROWS_WITH_AS(cfg.load_text("learning_rate = 1\n", "run.cfg"), "run.cfg:1: unknown config key 'learning_rate'",
                       Error);
  CHECK_THROWS_WITH_AS(cfg.load_text("\nepochs = ten\n", "run.cfg"),
                       "run.cfg:2: invalid value 'ten' for key 'epochs'", Error);
  CHECK_THROWS_WITH_AS(cfg.load_text("lr\n", "run.cfg"), "run.cfg:1: expected 'key = value'", Error);
  CHECK_THROWS_AS(cfg.set("seed", "-1"), Error);
  CHECK_THROWS_AS(cfg.set("lr", "nan"), Error);
  CHECK_THROWS_AS(cfg.set("lr", "0.1x"), Error);
  CHECK_THROWS_AS(cfg.set("detach", "maybe"), Error);
  CHECK_THROWS_AS(cfg.load_file("/nonexistent/run.cfg"), Error);
}

TEST_CASE("load_file") {
  gp::testing::TempDir dir("config");
  std::ofstream(dir / "run.cfg") << "epochs = 7\n";
  RunConfig cfg = make();
  cfg.load_file(dir / "run.cfg");
  CHECK(cfg.get_int("epochs") == 7);
}
