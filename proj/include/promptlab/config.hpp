#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/serialize.hpp"

namespace promptlab {

inline std::vector<NoiseSpec> default_noise_axis() {
  std::vector<NoiseSpec> out;
  for (double rate : {0.0, 0.125, 0.25, 0.5}) {
    NoiseSpec n;
    n.rate = rate;
    out.push_back(std::move(n));
  }
  return out;
}

// Everything one experiment run needs; an empty JSON config resolves to this
// default grid.
struct ExperimentConfig {
  WorldConfig world;
  std::vector<MethodSpec> methods = {MethodSpec{MethodKind::PromptTuning},
                                     MethodSpec{MethodKind::ClassifierR}};
  std::vector<NoiseSpec> noise = default_noise_axis();
  std::vector<LossSpec> losses = {LossSpec::ce()};
  TrainConfig train;
  UplConfig upl;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};

  void validate() const {
    world.validate();
    train.validate();
    upl.validate();
    if (methods.empty()) throw InvalidValueError("methods: need at least one entry");
    if (noise.empty()) throw InvalidValueError("noise: need at least one entry");
    if (losses.empty()) throw InvalidValueError("losses: need at least one entry");
    for (const LossSpec& l : losses) l.validate();
    for (const NoiseSpec& n : noise)
      if (n.rate < 0.0 || n.rate > 1.0)
        throw InvalidValueError("noise.rate: must be in [0, 1], got " + fmt_double(n.rate));
    if (seeds.empty()) throw InvalidValueError("seeds: need at least one entry");
    if (output_dir.empty()) throw InvalidValueError("output_dir: must be nonempty");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline Json encode_experiment_config(const ExperimentConfig& c) {
  Json j = Json::object();
  j["world"] = encode_world_config(c.world);
  Json methods = Json::array();
  for (const MethodSpec& m : c.methods) methods.push_back(encode_method_spec(m));
  j["methods"] = std::move(methods);
  Json noise = Json::array();
  for (const NoiseSpec& n : c.noise) noise.push_back(encode_noise(n));
  j["noise"] = std::move(noise);
  Json losses = Json::array();
  for (const LossSpec& l : c.losses) losses.push_back(encode_loss(l));
  j["losses"] = std::move(losses);
  j["train"] = encode_train_config(c.train);
  j["upl"] = encode_upl_config(c.upl);
  j["output_dir"] = c.output_dir;
  Json seeds = Json::array();
  for (std::uint64_t s : c.seeds) seeds.push_back(s);
  j["seeds"] = std::move(seeds);
  return j;
}

inline ExperimentConfig decode_experiment_config(const Json& j,
                                                 const std::string& where = "config") {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"world", "methods", "noise", "losses", "train", "upl",
                                "output_dir", "seeds"});
  ExperimentConfig c;
  if (const Json* v = jsonio::opt_field(j, "world"))
    c.world = decode_world_config(*v, where + ".world");
  if (const Json* v = jsonio::opt_field(j, "methods")) {
    jsonio::expect_array(*v, where + ".methods");
    c.methods.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string path = where + ".methods[" + std::to_string(i) + "]";
      const Json& entry = (*v)[i];
      // a bare string is shorthand for {"kind": <string>}
      if (entry.is_string())
        c.methods.push_back(MethodSpec{method_kind_from_name(entry.get<std::string>())});
      else
        c.methods.push_back(decode_method_spec(entry, path));
    }
  }
  if (const Json* v = jsonio::opt_field(j, "noise")) {
    jsonio::expect_array(*v, where + ".noise");
    c.noise.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.noise.push_back(decode_noise((*v)[i], where + ".noise[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "losses")) {
    jsonio::expect_array(*v, where + ".losses");
    c.losses.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string path = where + ".losses[" + std::to_string(i) + "]";
      const Json& entry = (*v)[i];
      if (entry.is_string()) {
        switch (loss_kind_from_name(entry.get<std::string>())) {
          case LossKind::CE: c.losses.push_back(LossSpec::ce()); break;
          case LossKind::GCE: c.losses.push_back(LossSpec::gce()); break;
          case LossKind::SCE: c.losses.push_back(LossSpec::sce()); break;
          case LossKind::NCERCE: c.losses.push_back(LossSpec::nce_rce()); break;
        }
      } else {
        c.losses.push_back(decode_loss(entry, path));
      }
    }
  }
  if (const Json* v = jsonio::opt_field(j, "train"))
    c.train = decode_train_config(*v, where + ".train");
  if (const Json* v = jsonio::opt_field(j, "upl")) c.upl = decode_upl_config(*v, where + ".upl");
  c.output_dir = jsonio::field_string(j, where, "output_dir", c.output_dir);
  if (const Json* v = jsonio::opt_field(j, "seeds")) {
    jsonio::expect_array(*v, where + ".seeds");
    c.seeds.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.seeds.push_back(jsonio::as_u64((*v)[i], where + ".seeds[" + std::to_string(i) + "]"));
  }
  jsonio::validate_as_config(where, [&] { c.validate(); });
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  return decode_experiment_config(parse_json_text(text, "config"));
}

}  // namespace promptlab
