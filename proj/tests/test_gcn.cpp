#include "graphpatch/checkpoint.hpp"
#include "graphpatch/gcn.hpp"
#include "graphpatch/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace gp;
using namespace gp::testing;

TEST_CASE("isolated node with zero weights predicts uniformly") {
  const Graph g = make_graph(1, {}, 3);
  GCNModel m = init_gcn(3, 4, 5, RngStream(1));
  for (auto* p : m.parameters()) p->value.setZero();
  const Matrix p = gcn_forward(m, g);
  for (Eigen::Index c = 0; c < 5; ++c) CHECK(p(0, c) == doctest::Approx(0.2));
}

TEST_CASE("forward rows are distributions") {
  const Graph g = make_graph(40, random_edges(40, 0.1, 2), 5, 3, 4);
  const Matrix p = gcn_forward(random_gcn(5, 8, 4, 6), g);
  for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).cast<double>().sum() - 1.0) < 1e-6);
  CHECK_THROWS_AS(gcn_forward(random_gcn(4, 8, 4, 6), g), ShapeError);
}

TEST_CASE("ego-graph anchor prediction equals the full-graph prediction") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Graph g = generate_synth({.nodes = 150, .classes = 3, .p_in = 0.06, .p_out = 0.01, .dim = 6, .seed = seed});
    const GCNModel m = random_gcn(6, 16, 3, seed + 10);
    const Matrix full = gcn_forward(m, g);
    for (NodeId v = 0; v < g.num_nodes(); v += 7) {
      const EgoGraph ego = ego_extract(g, v, kGcnLayers);
      const Vector anchor = anchor_distribution(m, ego);
      CHECK((anchor - full.row(v).transpose()).cwiseAbs().maxCoeff() < 1e-5f);
      CHECK((gcn_forward(m, ego).row(0) - full.row(v)).cwiseAbs().maxCoeff() < 1e-5f);
    }
  }
}

TEST_CASE("a one-hop ego-graph is not enough for a two-layer model") {
  // Guards the equivalence test above against a degenerate model that ignores the second hop.
  const Graph g = make_graph(6, path_edges(6), 3, 2);
  const GCNModel m = random_gcn(3, 8, 2, 3);
  const Vector two = anchor_distribution(m, ego_extract(g, 0, 2));
  const Vector one = anchor_distribution(m, ego_extract(g, 0, 1));
  CHECK((two - one).norm() > 1e-5f);
}

TEST_CASE("input_feature_grad") {
  const Graph g = make_graph(12, random_edges(12, 0.3, 5), 4, 7, 3);
  const GCNModel m = random_gcn(4, 6, 3, 8);
  const EgoGraph ego = add_patch_node(add_patch_node(ego_extract(g, 0, 2), Vector::Constant(4, 0.3f)),
                                      Vector::Constant(4, -0.6f));
  SUBCASE("zero upstream gives zero gradients") {
    CHECK(input_feature_grad(m, ego, Vector::Zero(3)).isZero());
  }
  SUBCASE("matches finite differences for every node, patch nodes included") {
    const Vector w = random_matrix(3, 1, 9).col(0);
    Parameter<float> feats("x", ego.features.rows(), ego.features.cols());
    feats.value = ego.features;
    feats.grad = input_feature_grad(m, ego, w);
    auto loss = [&] {
      EgoGraph probe = ego;
      probe.features = feats.value;
      return static_cast<double>(w.dot(anchor_distribution(m, probe)));
    };
    std::vector<Parameter<float>*> params{&feats};
    const auto r = gradcheck<float>(loss, params);
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-2);
  }
  SUBCASE("parameters are untouched") {
    const std::string before = parameter_checksum(m);
    (void)input_feature_grad(m, ego, Vector::Ones(3));
    CHECK(parameter_checksum(m) == before);
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(input_feature_grad(m, ego, Vector::Zero(2)), ShapeError); }
}

TEST_CASE("train_gnn") {
  const Graph g = generate_synth({.nodes = 200, .classes = 2, .p_in = 0.2, .p_out = 0.01, .gamma = 0.0, .dim = 4,
                                  .sigma = 0.5, .seed = 3});
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.seed = 4;

  SUBCASE("separable two-class SBM reaches high train accuracy") {
    const auto result = train_gnn(g, cfg);
    const Matrix p = gcn_forward(result.model, g);
    int correct = 0;
    for (NodeId v : g.splits().train) correct += argmax(p.row(v).transpose()) == g.labels()[static_cast<std::size_t>(v)];
    CHECK(static_cast<double>(correct) / static_cast<double>(g.splits().train.size()) >= 0.95);
    CHECK(result.best_epoch >= 0);
    CHECK(result.valid_loss.size() == result.train_loss.size());
  }
  SUBCASE("same seed, same curves") {
    const auto a = train_gnn(g, cfg);
    const auto b = train_gnn(g, cfg);
    CHECK(a.valid_loss == b.valid_loss);
    CHECK(parameter_checksum(a.model) == parameter_checksum(b.model));
  }
  SUBCASE("zero epochs returns the initialisation") {
    cfg.epochs = 0;
    const auto result = train_gnn(g, cfg);
    const GCNModel init = init_gcn(g.feature_dim(), cfg.hidden, g.num_classes(), RngStream(cfg.seed, 0x6763'6e00).child(0));
    CHECK(parameter_checksum(result.model) == parameter_checksum(init));
    CHECK(result.best_epoch == -1);
  }
  SUBCASE("empty split") {
    Splits s = g.splits();
    s.valid.clear();
    const Graph h(g.num_nodes(), {}, g.features(), g.labels(), s);
    CHECK_THROWS_AS(train_gnn(h, cfg), Error);
  }
  SUBCASE("unlabelled training node") {
    std::vector<int> labels = g.labels();
    labels[static_cast<std::size_t>(g.splits().train[0])] = kUnlabeled;
    const Graph h(g.num_nodes(), {}, g.features(), labels, g.splits());
    CHECK_THROWS_AS(train_gnn(h, cfg), Error);
  }
}

TEST_CASE("argmax breaks ties towards the lowest index") {
  Vector v(4);
  v << 0.1f, 0.4f, 0.4f, 0.1f;
  CHECK(argmax(v) == 1);
}

TEST_CASE("checkpoints") {
  TempDir dir("ckpt");
  const GCNModel m = random_gcn(5, 7, 3, 1);

  SUBCASE("round trip is bit exact") {
    save_checkpoint(m, dir / "gnn.ckpt");
    const GCNModel back = load_gcn_checkpoint(dir / "gnn.ckpt");
    const auto a = m.parameters();
    const auto b = back.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i]->value.size() == b[i]->value.size());
      CHECK(std::memcmp(a[i]->value.data(), b[i]->value.data(), sizeof(float) * static_cast<std::size_t>(a[i]->value.size())) == 0);
    }
    CHECK(sha256_file(dir / "gnn.ckpt") == parameter_checksum(m));
  }
  SUBCASE("layout: magic, manifest length, ordered manifest, blob") {
    const auto bytes = encode_checkpoint(to_checkpoint(m));
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GPCK");
    const std::uint32_t len = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) | (static_cast<std::uint32_t>(bytes[7]) << 24);
    const std::string manifest(bytes.begin() + 8, bytes.begin() + 8 + len);
    CHECK(manifest.find("\"model_kind\":\"gcn\"") != std::string::npos);
    CHECK(manifest.find("layer1.weight") < manifest.find("layer2.bias"));
    const std::size_t floats = 5 * 7 + 7 + 7 * 3 + 3;
    CHECK(bytes.size() == 8 + len + 4 * floats);
  }
  SUBCASE("truncated file") {
    auto bytes = encode_checkpoint(to_checkpoint(m));
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
    bytes.resize(6);
    CHECK_THROWS_WITH_AS(decode_checkpoint(bytes), "checkpoint truncated", Error);
  }
  SUBCASE("blob longer than the manifest declares") {
    auto bytes = encode_checkpoint(to_checkpoint(m));
    bytes.insert(bytes.end(), 4, 0);
    CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
  }
  SUBCASE("bad magic") {
    auto bytes = encode_checkpoint(to_checkpoint(m));
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
  }
  SUBCASE("model kind is checked") {
    save_checkpoint(random_patcher(5, 4, 1), dir / "patcher.ckpt");
    CHECK_THROWS_AS(load_gcn_checkpoint(dir / "patcher.ckpt"), Error);
    CHECK_NOTHROW(load_patcher_checkpoint(dir / "patcher.ckpt"));
    CHECK_THROWS_AS(load_patcher_checkpoint(dir / "missing.ckpt"), Error);
  }
  SUBCASE("patcher round trip") {
    const PatcherModel p = random_patcher(5, 4, 2);
    save_checkpoint(p, dir / "p.ckpt");
    CHECK(encode_checkpoint(to_checkpoint(load_patcher_checkpoint(dir / "p.ckpt"))) == encode_checkpoint(to_checkpoint(p)));
  }
}

TEST_CASE("sha256") {
  // FIPS 180-2 test vector.
  CHECK(sha256_hex("abc", 3) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
