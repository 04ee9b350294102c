#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/config.hpp"
#include "promptlab/noise.hpp"

using namespace promptlab;

namespace {

WorldConfig tiny_world_config(std::uint64_t seed = 1) {
  WorldConfig cfg;
  cfg.class_count = 3;
  cfg.shots_per_class = 4;
  cfg.test_per_class = 6;
  cfg.unlabeled_per_class = 6;
  cfg.seed = seed;
  cfg.encoder.token_dim = 4;
  cfg.encoder.embed_dim = 4;
  cfg.encoder.context_len = 2;
  return cfg;
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

TEST_CASE("empty config resolves to the default grid") {
  const ExperimentConfig cfg = parse_config("{}");
  REQUIRE(cfg == ExperimentConfig{});
  REQUIRE(cfg.world.class_count == 10);
  REQUIRE(cfg.world.shots_per_class == 16);
  REQUIRE(cfg.world.encoder.context_len == 16);
  REQUIRE(cfg.methods.size() == 2);
  REQUIRE(cfg.methods[0].kind == MethodKind::PromptTuning);
  REQUIRE(cfg.methods[1].kind == MethodKind::ClassifierR);
  REQUIRE(cfg.noise.size() == 4);
  REQUIRE(cfg.noise[1].rate == 0.125);
  REQUIRE(cfg.noise[3].rate == 0.5);
  REQUIRE(cfg.losses.size() == 1);
  REQUIRE(cfg.losses[0].kind == LossKind::CE);
  REQUIRE(cfg.losses[0].q == 0.7);
  REQUIRE(cfg.train.epochs == 50);
  REQUIRE(cfg.train.batch_size == 32);
  REQUIRE(cfg.train.lr0 == 0.002);
  REQUIRE(cfg.train.momentum == 0.9);
  REQUIRE(cfg.upl.k == 16);
  REQUIRE(cfg.upl.ensemble_size == 4);
  REQUIRE(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4});
  REQUIRE(cfg.output_dir == "out");
}

TEST_CASE("config validation errors name the offending field") {
  REQUIRE_THROWS_AS(parse_config(R"({"train": {"momentum": 1.5}})"), InvalidValueError);
  REQUIRE_THROWS_WITH(parse_config(R"({"train": {"momentum": 1.5}})"),
                      Catch::Matchers::ContainsSubstring("momentum"));
  REQUIRE_THROWS_AS(parse_config(R"({"train": {"batch_size": 0}})"), InvalidValueError);
  REQUIRE_THROWS_AS(parse_config(R"({"losses": [{"kind": "gce", "q": 0}]})"),
                    InvalidValueError);
  REQUIRE_THROWS_AS(parse_config(R"({"world": {"encoder": {"temperature": -1}}})"),
                    InvalidValueError);
  REQUIRE_THROWS_AS(parse_config(R"({"noise": [{"kind": "random", "rate": 1.5}]})"),
                    InvalidValueError);
  REQUIRE_THROWS_AS(parse_config(R"({"methods": []})"), InvalidValueError);
  REQUIRE_THROWS_AS(parse_config(R"({"seeds": [-3]})"), InvalidValueError);
}

TEST_CASE("unknown config keys are rejected by name") {
  REQUIRE_THROWS_AS(parse_config(R"({"wrold": {}})"), UnknownKeyError);
  REQUIRE_THROWS_WITH(parse_config(R"({"wrold": {}})"),
                      Catch::Matchers::ContainsSubstring("wrold"));
  REQUIRE_THROWS_AS(parse_config(R"({"train": {"lr": 0.1}})"), UnknownKeyError);
  REQUIRE_THROWS_WITH(parse_config(R"({"train": {"lr": 0.1}})"),
                      Catch::Matchers::ContainsSubstring("config.train") &&
                          Catch::Matchers::ContainsSubstring("\"lr\""));
}

TEST_CASE("malformed json raises a syntax error with position info") {
  REQUIRE_THROWS_AS(parse_config("{nope"), ConfigSyntaxError);
  REQUIRE_THROWS_WITH(parse_config("{nope"),
                      Catch::Matchers::ContainsSubstring("parse error"));
}

TEST_CASE("config round-trips through its json encoding") {
  ExperimentConfig cfg;
  cfg.world = tiny_world_config(9);
  cfg.methods = {{MethodKind::PromptTuning, 2}, {MethodKind::TEncFT, 0}};
  NoiseSpec conf;
  conf.kind = NoiseKind::Confusion;
  conf.rate = 0.25;
  conf.confusion = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  cfg.noise = {conf};
  cfg.losses = {LossSpec::gce(0.5), LossSpec::sce(0.2, 0.9, -3.0)};
  cfg.train.epochs = 7;
  cfg.train.loss = LossSpec::gce(0.4);
  cfg.upl.k = 8;
  cfg.upl.selection = SelectionStrategy::Random;
  cfg.upl.loss = LossSpec::gce(0.3);
  cfg.upl.ensemble_size = 2;
  cfg.output_dir = "elsewhere";
  cfg.seeds = {7, 9};

  const std::string text = encode_experiment_config(cfg).dump(2);
  REQUIRE(parse_config(text) == cfg);
  // encoding is deterministic
  REQUIRE(encode_experiment_config(parse_config(text)).dump(2) == text);
}

TEST_CASE("method and loss entries accept string shorthand") {
  const ExperimentConfig cfg =
      parse_config(R"({"methods": ["zero_shot", "cls_tuning"], "losses": ["gce", "sce"]})");
  REQUIRE(cfg.methods[0].kind == MethodKind::ZeroShot);
  REQUIRE(cfg.methods[0].context_len == kContextFromWorld);
  REQUIRE(cfg.methods[1].kind == MethodKind::CLSTuning);
  REQUIRE(cfg.losses[0] == LossSpec::gce());
  REQUIRE(cfg.losses[1] == LossSpec::sce());
  REQUIRE_THROWS_AS(parse_config(R"({"methods": ["linear_probe"]})"), InvalidValueError);
}

TEST_CASE("loss decoding starts from the kind's own defaults") {
  const LossSpec gce = decode_loss(parse_json_text(R"({"kind": "gce"})", "t"), "t");
  REQUIRE(gce == LossSpec::gce());
  REQUIRE(gce.q == 0.7);
  const LossSpec gce_q = decode_loss(parse_json_text(R"({"kind": "gce", "q": 0.5})", "t"), "t");
  REQUIRE(gce_q.q == 0.5);
  const LossSpec sce = decode_loss(parse_json_text(R"({"kind": "sce"})", "t"), "t");
  REQUIRE(sce.alpha == 0.1);
  REQUIRE(sce.beta == 1.0);
  REQUIRE(sce.log_zero == -4.0);
  REQUIRE_THROWS_AS(decode_loss(parse_json_text(R"({"kind": "mae"})", "t"), "t"),
                    InvalidValueError);
  REQUIRE_THROWS_AS(decode_loss(parse_json_text(R"({"q": 0.5})", "t"), "t"),
                    InvalidValueError);
}

TEST_CASE("matrix json round-trip is bit-exact") {
  Matrix m(2, 3);
  m.at(0, 0) = 1.0 / 3.0;
  m.at(0, 1) = -0.0;
  m.at(0, 2) = 1e-300;
  m.at(1, 0) = -12345.678901234567;
  m.at(1, 1) = 0.1;
  m.at(1, 2) = 2e300;
  const Matrix back = decode_matrix(encode_matrix(m), "m");
  REQUIRE(back == m);
  for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(same_bits(back[i], m[i]));

  // the same holds through an actual text dump
  const Matrix back2 =
      decode_matrix(parse_json_text(encode_matrix(m).dump(), "m"), "m");
  for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(same_bits(back2[i], m[i]));

  REQUIRE_THROWS_AS(
      decode_matrix(parse_json_text(R"({"rows": 2, "cols": 2, "data": [1, 2, 3]})", "m"), "m"),
      InvalidValueError);
  REQUIRE_THROWS_AS(
      decode_matrix(parse_json_text(R"({"rows": 1, "cols": 1, "data": [1], "extra": 0})", "m"),
                    "m"),
      UnknownKeyError);
}

TEST_CASE("encoder weights round-trip through named arrays") {
  const World world = generate_world(tiny_world_config(4));
  const Json j = encode_encoder_weights(world.weights);
  for (const char* name : {"w_q", "w_k", "w_v", "w1", "b1", "w2", "b2", "w_out", "pos"})
    REQUIRE(j.contains(name));
  const EncoderWeights back = decode_encoder_weights(parse_json_text(j.dump(), "w"), "w");
  REQUIRE(back == world.weights);
}

TEST_CASE("world files round-trip and reject tampering") {
  const World world = generate_world(tiny_world_config(5));
  const Json j = encode_world(world);
  const World back = decode_world(parse_json_text(j.dump(2), "world"));
  REQUIRE(back.config == world.config);
  REQUIRE(back.weights == world.weights);
  REQUIRE(back.truth_prompt == world.truth_prompt);
  REQUIRE(back.template_prompt == world.template_prompt);
  REQUIRE(back.vocab.tokens == world.vocab.tokens);
  REQUIRE(back.prototypes == world.prototypes);

  Json wrong_kind = j;
  wrong_kind["kind"] = "dataset";
  REQUIRE_THROWS_AS(decode_world(wrong_kind), InvalidValueError);

  Json wrong_version = j;
  wrong_version["schema_version"] = 99;
  REQUIRE_THROWS_AS(decode_world(wrong_version), InvalidValueError);

  Json wrong_shape = j;
  wrong_shape["truth_prompt"] = encode_matrix(Matrix(1, 4));
  REQUIRE_THROWS_AS(decode_world(wrong_shape), InvalidValueError);

  Json extra_key = j;
  extra_key["surprise"] = 1;
  REQUIRE_THROWS_AS(decode_world(extra_key), UnknownKeyError);
}

TEST_CASE("dataset csv round-trips bit-exactly with noisy labels") {
  const World world = generate_world(tiny_world_config(6));
  EmbeddingDataset ds = sample_dataset(world, Split::Train);
  ds = inject_random_noise(ds, 0.5, 17);

  const std::string csv = render_dataset_csv(ds);
  const std::string first_line = csv.substr(0, csv.find('\n'));
  REQUIRE(first_line == "index,true_label,observed_label,clean_flag,e0,e1,e2,e3");

  const EmbeddingDataset back = parse_dataset_csv(csv, ds.num_classes);
  REQUIRE(back.images == ds.images);
  REQUIRE(back.true_labels == ds.true_labels);
  REQUIRE(back.observed_labels == ds.observed_labels);
  REQUIRE(back.clean_flags == ds.clean_flags);

  REQUIRE_THROWS_AS(parse_dataset_csv("", 3), InvalidValueError);
  REQUIRE_THROWS_AS(parse_dataset_csv("index,nope\n", 3), InvalidValueError);
  REQUIRE_THROWS_AS(parse_dataset_csv("index,true_label,observed_label,clean_flag,e0\n0,0,0,2,1.0\n", 3),
                    InvalidValueError);
}

TEST_CASE("dataset sidecars keep the generating config and noise spec") {
  DatasetSidecar side;
  side.world = tiny_world_config(8);
  side.split = "train";
  NoiseSpec n;
  n.rate = 0.25;
  side.noise = n;

  const Json j = encode_dataset_sidecar(side);
  const DatasetSidecar back = decode_dataset_sidecar(parse_json_text(j.dump(), "dataset"));
  REQUIRE(back.world == side.world);
  REQUIRE(back.split == "train");
  REQUIRE(back.noise.has_value());
  REQUIRE(*back.noise == n);

  DatasetSidecar clean = side;
  clean.noise.reset();
  const DatasetSidecar back2 =
      decode_dataset_sidecar(parse_json_text(encode_dataset_sidecar(clean).dump(), "dataset"));
  REQUIRE(!back2.noise.has_value());
}

TEST_CASE("method state json round-trip preserves every tensor bitwise") {
  const World world = generate_world(tiny_world_config(2));
  const EmbeddingDataset data = sample_dataset(world, Split::Train);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;

  for (MethodKind kind : {MethodKind::PromptTuning, MethodKind::TEncFT, MethodKind::ZeroShot}) {
    const MethodSpec spec{kind, kContextFromWorld};
    MethodState state = build_method_state(spec, world, 31);
    train(state, spec, world, data, tc);

    const MethodState back =
        decode_method_state(parse_json_text(encode_method_state(state).dump(), "state"), "state");
    REQUIRE(back.kind == state.kind);
    REQUIRE(back.context_len == state.context_len);
    REQUIRE(back.prompt == state.prompt);
    REQUIRE(back.vocab_copy == state.vocab_copy);
    REQUIRE(back.classifier_rows == state.classifier_rows);
    REQUIRE(back.has_encoder_copy == state.has_encoder_copy);
    if (state.has_encoder_copy) REQUIRE(back.encoder_copy == state.encoder_copy);
    REQUIRE(back.momentum.size() == state.momentum.size());
    for (std::size_t i = 0; i < state.momentum.size(); ++i)
      REQUIRE(back.momentum[i] == state.momentum[i]);
  }
}

TEST_CASE("fmt_double emits shortest round-trip forms") {
  REQUIRE(fmt_double(0.0) == "0");
  REQUIRE(fmt_double(0.25) == "0.25");
  REQUIRE(fmt_double(0.1) == "0.1");
  for (double v : {1.0 / 3.0, 0.002, 1e-300, -12345.678901234567, 2e300}) {
    const std::string s = fmt_double(v);
    REQUIRE(std::stod(s) == v);
  }
}
