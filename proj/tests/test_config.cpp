#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"

#include "inode/config.hpp"
#include "inode/errors.hpp"

using inode::ConfigError;
using inode::FormatError;
using inode::MissingArtifact;
using inode::model::Pathways;
using inode::model::Variant;
using nlohmann::json;
using namespace inode::cfg;

namespace {

json minimal(const char* name, int seed = 1) {
  return {{"dataset", {{"name", name}, {"seed", seed}}}};
}

// The message should point at the offending field.
#define CHECK_CFG_ERROR(expr, fragment)                               \
  do {                                                                \
    try {                                                             \
      (void)(expr);                                                   \
      FAIL_CHECK("expected ConfigError mentioning " << (fragment));   \
    } catch (const ConfigError& e) {                                  \
      CHECK(std::string(e.what()).find(fragment) != std::string::npos); \
    }                                                                 \
  } while (0)

}  // namespace

TEST_CASE("a bare sinusoid config resolves to the protocol defaults") {
  auto c = parse_experiment(minimal("sinusoid"));
  CHECK(c.dataset.name == "sinusoid");
  CHECK(c.dataset.path == "data/sinusoid");
  CHECK(c.dataset.gen.seed == 1);
  CHECK(c.dataset.gen.n_train == 80);
  CHECK(c.dataset.gen.n_val == 25);
  CHECK(c.dataset.gen.n_test == 25);
  CHECK(c.dataset.gen.n_t == 50);
  CHECK(c.dataset.gen.dt == 0.1);
  CHECK(c.dataset.gen.sigma == 0.1);
  CHECK(c.model.variant == Variant::kInode);
  CHECK(c.model.q_x == 4);
  CHECK(c.model.q_c == 4);
  CHECK(c.model.t_in == 3);
  CHECK(c.model.t_inv == 10);
  CHECK(c.model.t_in_node == 10);
  CHECK(c.model.n_e == 3);
  CHECK(c.model.data_dim == 1);
  CHECK(c.model.solver.kind == inode::ode::SolverKind::kEuler);
  CHECK(c.model.solver.dt == 0.1);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.max_epochs == 300);
  CHECK(c.train.patience == 30);
  CHECK(c.train.lambda == 0.0);
  CHECK(c.train.seed == 1);
  CHECK(c.eval.mc_samples == 20);
  CHECK(c.eval.sim_n_seq == 25);
  CHECK(c.eval.sim_n_frames == 16);
  CHECK(c.output_dir == "runs/sinusoid-inode");

  auto hs = resolve_horizons(c.eval.horizons, c.model, c.dataset.gen.n_t);
  REQUIRE(hs.size() == 3);
  CHECK(hs[0].label == "tin");
  CHECK(hs[0].len == 3);
  CHECK(hs[1].label == "nt");
  CHECK(hs[1].len == 50);
  CHECK(hs[2].label == "3nt");
  CHECK(hs[2].len == 150);
}

TEST_CASE("lotka-volterra and sinusoid-content protocols differ where the tables say") {
  auto lv = parse_experiment(minimal("lotka_volterra", 2));
  CHECK(lv.dataset.gen.n_train == 500);
  CHECK(lv.dataset.gen.n_val == 100);
  CHECK(lv.dataset.gen.n_test == 100);
  CHECK(lv.dataset.gen.n_t == 200);
  CHECK(lv.model.q_x == 8);
  CHECK(lv.model.q_c == 8);
  CHECK(lv.model.t_in == 8);
  CHECK(lv.model.t_inv == 40);
  CHECK(lv.model.t_in_node == 40);
  CHECK(lv.model.n_e == 8);  // window length tracks t_in
  CHECK(lv.model.data_dim == 2);
  CHECK(lv.train.batch_size == 32);
  CHECK(lv.train.max_epochs == 200);

  auto sc = parse_experiment(minimal("sinusoid_content", 3));
  CHECK(sc.model.data_dim == 2);
  CHECK(sc.model.q_x == 4);
  CHECK(sc.model.t_in == 3);
  CHECK(sc.model.t_inv == 10);
  CHECK(sc.dataset.gen.n_train == 80);

  CHECK_CFG_ERROR(parse_experiment(minimal("pendulum")), "config.dataset.name");
}

TEST_CASE("lambda defaults by variant and nonzero lambda demands sinode") {
  auto j = minimal("sinusoid");
  j["model"] = {{"variant", "sinode"}};
  CHECK(parse_experiment(j).train.lambda == 1.0);

  j["train"] = {{"lambda", 0.0}};
  CHECK(parse_experiment(j).train.lambda == 0.0);  // the exact-equivalence setup

  j["model"] = {{"variant", "inode"}};
  j["train"] = {{"lambda", 0.5}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.train.lambda");

  j["model"] = {{"variant", "node"}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.train.lambda");

  j["train"] = {{"lambda", 10.0}};
  j["model"] = {{"variant", "sinode"}};
  CHECK(parse_experiment(j).train.lambda == 10.0);
}

TEST_CASE("unknown keys are rejected with their full path") {
  auto j = minimal("sinusoid");
  j["experiment"] = 1;
  CHECK_CFG_ERROR(parse_experiment(j), "config.experiment: unknown key");

  j = minimal("sinusoid");
  j["train"] = {{"lrr", 0.1}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.train.lrr: unknown key");

  j = minimal("sinusoid");
  j["model"] = {{"solver", {{"step", 0.1}}}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.solver.step: unknown key");

  j = minimal("sinusoid");
  j["dataset"]["n_sequences"] = 5;
  CHECK_CFG_ERROR(parse_experiment(j), "config.dataset.n_sequences: unknown key");
}

TEST_CASE("missing and mistyped fields name the offending path") {
  CHECK_CFG_ERROR(parse_experiment(json{{"dataset", {{"name", "sinusoid"}}}}),
                  "config.dataset.seed: missing required field");
  CHECK_CFG_ERROR(parse_experiment(json::object()), "config.dataset: missing required field");
  CHECK_CFG_ERROR(parse_experiment(json{{"dataset", "sinusoid"}}),
                  "config.dataset: expected an object");

  auto j = minimal("sinusoid");
  j["train"] = {{"lr", "fast"}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.train.lr: expected a number");

  j = minimal("sinusoid");
  j["model"] = {{"q_x", 2.5}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.q_x: expected an integer");

  j = minimal("sinusoid");
  j["dataset"]["seed"] = -1;
  CHECK_CFG_ERROR(parse_experiment(j), "config.dataset.seed: expected a non-negative integer");

  j = minimal("sinusoid");
  j["model"] = {{"variant", "resnet"}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.variant");
}

TEST_CASE("horizon entries expand symbolically or as explicit frame counts") {
  auto j = minimal("sinusoid");
  j["eval"] = {{"horizons", {"tin", 12, "3nt"}}};
  auto c = parse_experiment(j);
  auto hs = resolve_horizons(c.eval.horizons, c.model, c.dataset.gen.n_t);
  REQUIRE(hs.size() == 3);
  CHECK(hs[1].label == "12");
  CHECK(hs[1].len == 12);
  CHECK(hs[2].len == 150);

  j["eval"] = {{"horizons", {"weekly"}}};
  CHECK_CFG_ERROR(parse_experiment(j), "horizons[0]");
  j["eval"] = {{"horizons", {0}}};
  CHECK_CFG_ERROR(parse_experiment(j), "at least one frame");
  j["eval"] = {{"horizons", json::array()}};
  CHECK_CFG_ERROR(parse_experiment(j), "must be nonempty");
  j["eval"] = {{"horizons", {true}}};
  CHECK_CFG_ERROR(parse_experiment(j), "horizons[0]");
}

TEST_CASE("cross-field contracts are enforced at parse time") {
  auto j = minimal("sinusoid");
  j["model"] = {{"data_dim", 3}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.data_dim");
  j["model"] = {{"data_dim", 1}};
  CHECK(parse_experiment(j).model.data_dim == 1);

  // Fair comparison: a NODE encoder must see exactly t_inv frames.
  j["model"] = {{"variant", "node"}, {"t_in_node", 5}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model");
  j["model"] = {{"variant", "node"}};
  CHECK(parse_experiment(j).model.t_in_node == 10);

  // Fixed-step solvers must divide the observation interval; dopri5 is free.
  j["model"] = {{"solver", {{"dt", 0.03}}}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.solver.dt");
  j["model"] = {{"solver", {{"dt", 0.05}}}};
  CHECK(parse_experiment(j).model.solver.dt == 0.05);
  j["model"] = {{"solver", {{"kind", "dopri5"}, {"dt", 0.03}}}};
  CHECK(parse_experiment(j).model.solver.kind == inode::ode::SolverKind::kDopri5);

  // The invariant context cannot be longer than the sequences.
  j["model"] = {{"t_inv", 60}};
  CHECK_CFG_ERROR(parse_experiment(j), "config.model.t_inv");
  j["model"] = {{"t_inv", 60}};
  j["dataset"]["n_t"] = 80;
  CHECK(parse_experiment(j).model.t_inv == 60);
}

TEST_CASE("window length follows t_in overrides unless set explicitly") {
  auto j = minimal("sinusoid");
  j["model"] = {{"t_in", 5}};
  CHECK(parse_experiment(j).model.n_e == 5);
  j["model"] = {{"t_in", 5}, {"n_e", 4}};
  CHECK(parse_experiment(j).model.n_e == 4);
}

TEST_CASE("the resolved snapshot parses back to itself") {
  auto j = minimal("sinusoid");
  j["model"] = {{"variant", "sinode"}, {"q_x", 6}};
  j["train"] = {{"max_epochs", 7}};
  auto c = parse_experiment(j);
  auto snap = c.to_json();
  auto c2 = parse_experiment(snap);
  CHECK(c2.to_json() == snap);
  CHECK(c2.model.q_x == 6);
  CHECK(c2.train.max_epochs == 7);
  CHECK(c2.train.lambda == 1.0);
  CHECK(parse_experiment(minimal("sinusoid")).to_json() ==
        parse_experiment(minimal("sinusoid")).to_json());
}

TEST_CASE("config files load with artifact-aware errors") {
  const std::string good = "/tmp/inode_cfg_good.json";
  save_json(minimal("sinusoid", 9), good);
  auto c = load_experiment(good);
  CHECK(c.dataset.gen.seed == 9);

  CHECK_THROWS_AS((void)load_experiment("/tmp/inode_cfg_absent.json"), MissingArtifact);

  const std::string bad = "/tmp/inode_cfg_bad.json";
  {
    std::ofstream out(bad, std::ios::trunc);
    out << "{ not json";
  }
  CHECK_THROWS_AS((void)load_experiment(bad), FormatError);

  // save_json emits stable bytes for identical content.
  const std::string again = "/tmp/inode_cfg_good2.json";
  save_json(minimal("sinusoid", 9), again);
  std::ifstream a(good), b(again);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());
  CHECK(sa.back() == '\n');
}
