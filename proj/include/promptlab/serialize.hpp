#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptlab/report.hpp"
#include "promptlab/upl.hpp"

namespace promptlab {

// Insertion-ordered JSON keeps emitted files stable and diffable.
using Json = nlohmann::ordered_json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline Json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigSyntaxError(where + ": " + e.what());
  }
}

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw IoError("fmt_double: conversion failed");
  return std::string(buf, res.ptr);
}

namespace jsonio {

inline void expect_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw InvalidValueError(where + ": expected an object");
}

inline void expect_array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidValueError(where + ": expected an array");
}

// Decoding is strict: a key outside the struct's field list is an error, not
// something to skip silently.
inline void check_keys(const Json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw UnknownKeyError(where + ": unknown key \"" + item.key() + "\"");
  }
}

inline const Json* opt_field(const Json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline const Json& req_field(const Json& j, const std::string& where, const char* key) {
  const auto it = j.find(key);
  if (it == j.end())
    throw InvalidValueError(where + ": missing required key \"" + std::string(key) + "\"");
  return *it;
}

inline double as_double(const Json& v, const std::string& path) {
  if (!v.is_number()) throw InvalidValueError(path + ": expected a number");
  return v.get<double>();
}

inline bool as_bool(const Json& v, const std::string& path) {
  if (!v.is_boolean()) throw InvalidValueError(path + ": expected a boolean");
  return v.get<bool>();
}

inline std::string as_string(const Json& v, const std::string& path) {
  if (!v.is_string()) throw InvalidValueError(path + ": expected a string");
  return v.get<std::string>();
}

inline std::uint64_t as_u64(const Json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const std::int64_t x = v.get<std::int64_t>();
    if (x < 0) throw InvalidValueError(path + ": expected a nonnegative integer");
    return static_cast<std::uint64_t>(x);
  }
  throw InvalidValueError(path + ": expected a nonnegative integer");
}

inline std::size_t as_size(const Json& v, const std::string& path) {
  return static_cast<std::size_t>(as_u64(v, path));
}

inline int as_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw InvalidValueError(path + ": expected an integer");
  const std::int64_t x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw InvalidValueError(path + ": integer out of range");
  return static_cast<int>(x);
}

inline double field_double(const Json& j, const std::string& where, const char* key,
                           double def) {
  const Json* v = opt_field(j, key);
  return v ? as_double(*v, where + "." + key) : def;
}

inline bool field_bool(const Json& j, const std::string& where, const char* key, bool def) {
  const Json* v = opt_field(j, key);
  return v ? as_bool(*v, where + "." + key) : def;
}

inline std::string field_string(const Json& j, const std::string& where, const char* key,
                                const std::string& def) {
  const Json* v = opt_field(j, key);
  return v ? as_string(*v, where + "." + key) : def;
}

inline std::uint64_t field_u64(const Json& j, const std::string& where, const char* key,
                               std::uint64_t def) {
  const Json* v = opt_field(j, key);
  return v ? as_u64(*v, where + "." + key) : def;
}

inline std::size_t field_size(const Json& j, const std::string& where, const char* key,
                              std::size_t def) {
  const Json* v = opt_field(j, key);
  return v ? as_size(*v, where + "." + key) : def;
}

inline int field_int(const Json& j, const std::string& where, const char* key, int def) {
  const Json* v = opt_field(j, key);
  return v ? as_int(*v, where + "." + key) : def;
}

// Domain validate() methods throw domain errors (InvalidQError and friends);
// during config decoding those must still register as config errors.
template <typename F>
inline void validate_as_config(const std::string& where, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw InvalidValueError(where + ": " + e.what());
  }
}

inline Json encode_optional(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline std::optional<double> decode_optional(const Json& v, const std::string& path) {
  if (v.is_null()) return std::nullopt;
  return as_double(v, path);
}

// JSON has no infinity literal; a non-finite ratio is stored as null.
inline Json encode_ratio(double r) { return std::isfinite(r) ? Json(r) : Json(nullptr); }

inline double decode_ratio(const Json& v, const std::string& path) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  return as_double(v, path);
}

}  // namespace jsonio

inline Json encode_matrix(const Matrix& m) {
  Json j = Json::object();
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (std::size_t i = 0; i < m.size(); ++i) data.push_back(m[i]);
  j["data"] = std::move(data);
  return j;
}

inline Matrix decode_matrix(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"rows", "cols", "data"});
  const std::size_t rows = jsonio::as_size(jsonio::req_field(j, where, "rows"), where + ".rows");
  const std::size_t cols = jsonio::as_size(jsonio::req_field(j, where, "cols"), where + ".cols");
  const Json& data = jsonio::req_field(j, where, "data");
  jsonio::expect_array(data, where + ".data");
  if (data.size() != rows * cols)
    throw InvalidValueError(where + ".data: expected " + std::to_string(rows * cols) +
                            " entries, got " + std::to_string(data.size()));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = jsonio::as_double(data[i], where + ".data");
  return m;
}

inline Json encode_encoder_config(const EncoderConfig& c) {
  Json j = Json::object();
  j["token_dim"] = c.token_dim;
  j["embed_dim"] = c.embed_dim;
  j["context_len"] = c.context_len;
  j["hidden_width"] = c.hidden_width;
  j["temperature"] = c.temperature;
  return j;
}

inline EncoderConfig decode_encoder_config(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where,
                     {"token_dim", "embed_dim", "context_len", "hidden_width", "temperature"});
  EncoderConfig c;
  c.token_dim = jsonio::field_size(j, where, "token_dim", c.token_dim);
  c.embed_dim = jsonio::field_size(j, where, "embed_dim", c.embed_dim);
  c.context_len = jsonio::field_size(j, where, "context_len", c.context_len);
  c.hidden_width = jsonio::field_size(j, where, "hidden_width", c.hidden_width);
  c.temperature = jsonio::field_double(j, where, "temperature", c.temperature);
  jsonio::validate_as_config(where, [&] { c.validate(); });
  return c;
}

inline Json encode_world_config(const WorldConfig& c) {
  Json j = Json::object();
  j["class_count"] = c.class_count;
  j["shots_per_class"] = c.shots_per_class;
  j["test_per_class"] = c.test_per_class;
  j["unlabeled_per_class"] = c.unlabeled_per_class;
  j["image_noise_std"] = c.image_noise_std;
  j["seed"] = c.seed;
  j["encoder"] = encode_encoder_config(c.encoder);
  return j;
}

inline WorldConfig decode_world_config(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where,
                     {"class_count", "shots_per_class", "test_per_class", "unlabeled_per_class",
                      "image_noise_std", "seed", "encoder"});
  WorldConfig c;
  c.class_count = jsonio::field_size(j, where, "class_count", c.class_count);
  c.shots_per_class = jsonio::field_size(j, where, "shots_per_class", c.shots_per_class);
  c.test_per_class = jsonio::field_size(j, where, "test_per_class", c.test_per_class);
  c.unlabeled_per_class =
      jsonio::field_size(j, where, "unlabeled_per_class", c.unlabeled_per_class);
  c.image_noise_std = jsonio::field_double(j, where, "image_noise_std", c.image_noise_std);
  c.seed = jsonio::field_u64(j, where, "seed", c.seed);
  if (const Json* v = jsonio::opt_field(j, "encoder"))
    c.encoder = decode_encoder_config(*v, where + ".encoder");
  jsonio::validate_as_config(where, [&] { c.validate(); });
  return c;
}

inline Json encode_encoder_weights(const EncoderWeights& w) {
  Json j = Json::object();
  j["w_q"] = encode_matrix(w.w_q);
  j["w_k"] = encode_matrix(w.w_k);
  j["w_v"] = encode_matrix(w.w_v);
  j["w1"] = encode_matrix(w.w1);
  j["b1"] = encode_matrix(w.b1);
  j["w2"] = encode_matrix(w.w2);
  j["b2"] = encode_matrix(w.b2);
  j["w_out"] = encode_matrix(w.w_out);
  j["pos"] = encode_matrix(w.pos);
  return j;
}

inline EncoderWeights decode_encoder_weights(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"w_q", "w_k", "w_v", "w1", "b1", "w2", "b2", "w_out", "pos"});
  EncoderWeights w;
  w.w_q = decode_matrix(jsonio::req_field(j, where, "w_q"), where + ".w_q");
  w.w_k = decode_matrix(jsonio::req_field(j, where, "w_k"), where + ".w_k");
  w.w_v = decode_matrix(jsonio::req_field(j, where, "w_v"), where + ".w_v");
  w.w1 = decode_matrix(jsonio::req_field(j, where, "w1"), where + ".w1");
  w.b1 = decode_matrix(jsonio::req_field(j, where, "b1"), where + ".b1");
  w.w2 = decode_matrix(jsonio::req_field(j, where, "w2"), where + ".w2");
  w.b2 = decode_matrix(jsonio::req_field(j, where, "b2"), where + ".b2");
  w.w_out = decode_matrix(jsonio::req_field(j, where, "w_out"), where + ".w_out");
  w.pos = decode_matrix(jsonio::req_field(j, where, "pos"), where + ".pos");
  return w;
}

inline Json encode_world(const World& w) {
  Json j = Json::object();
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "world";
  j["config"] = encode_world_config(w.config);
  j["weights"] = encode_encoder_weights(w.weights);
  j["truth_prompt"] = encode_matrix(w.truth_prompt);
  j["template_prompt"] = encode_matrix(w.template_prompt);
  j["vocab"] = encode_matrix(w.vocab.tokens);
  j["prototypes"] = encode_matrix(w.prototypes);
  return j;
}

inline World decode_world(const Json& j, const std::string& where = "world") {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"schema_version", "kind", "config", "weights", "truth_prompt",
                                "template_prompt", "vocab", "prototypes", "config_echo"});
  const int version =
      jsonio::as_int(jsonio::req_field(j, where, "schema_version"), where + ".schema_version");
  if (version != kReportSchemaVersion)
    throw InvalidValueError(where + ": unsupported schema_version " + std::to_string(version));
  const std::string kind =
      jsonio::as_string(jsonio::req_field(j, where, "kind"), where + ".kind");
  if (kind != "world") throw InvalidValueError(where + ": kind is \"" + kind + "\", not \"world\"");

  World w;
  w.config = decode_world_config(jsonio::req_field(j, where, "config"), where + ".config");
  w.weights = decode_encoder_weights(jsonio::req_field(j, where, "weights"), where + ".weights");
  w.truth_prompt = decode_matrix(jsonio::req_field(j, where, "truth_prompt"), where + ".truth_prompt");
  w.template_prompt =
      decode_matrix(jsonio::req_field(j, where, "template_prompt"), where + ".template_prompt");
  w.vocab.tokens = decode_matrix(jsonio::req_field(j, where, "vocab"), where + ".vocab");
  w.prototypes = decode_matrix(jsonio::req_field(j, where, "prototypes"), where + ".prototypes");

  const EncoderConfig& e = w.config.encoder;
  const std::size_t d = e.token_dim;
  auto shape_check = [&](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw InvalidValueError(where + "." + name + ": shape disagrees with config");
  };
  shape_check(w.weights.w_q, d, d, "weights.w_q");
  shape_check(w.weights.w_k, d, d, "weights.w_k");
  shape_check(w.weights.w_v, d, d, "weights.w_v");
  shape_check(w.weights.w1, d, e.hidden(), "weights.w1");
  shape_check(w.weights.b1, 1, e.hidden(), "weights.b1");
  shape_check(w.weights.w2, e.hidden(), d, "weights.w2");
  shape_check(w.weights.b2, 1, d, "weights.b2");
  shape_check(w.weights.w_out, d, e.embed_dim, "weights.w_out");
  shape_check(w.weights.pos, e.context_len + 1, d, "weights.pos");
  shape_check(w.truth_prompt, e.context_len, d, "truth_prompt");
  shape_check(w.template_prompt, e.context_len, d, "template_prompt");
  shape_check(w.vocab.tokens, w.config.class_count, d, "vocab");
  shape_check(w.prototypes, w.config.class_count, e.embed_dim, "prototypes");
  return w;
}

inline Json encode_loss(const LossSpec& l) {
  Json j = Json::object();
  j["kind"] = loss_kind_name(l.kind);
  j["q"] = l.q;
  j["alpha"] = l.alpha;
  j["beta"] = l.beta;
  j["log_zero"] = l.log_zero;
  return j;
}

inline LossSpec decode_loss(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"kind", "q", "alpha", "beta", "log_zero"});
  const LossKind kind =
      loss_kind_from_name(jsonio::as_string(jsonio::req_field(j, where, "kind"), where + ".kind"));
  // Start from the kind's factory so omitted fields keep that kind's defaults.
  LossSpec l;
  switch (kind) {
    case LossKind::CE: l = LossSpec::ce(); break;
    case LossKind::GCE: l = LossSpec::gce(); break;
    case LossKind::SCE: l = LossSpec::sce(); break;
    case LossKind::NCERCE: l = LossSpec::nce_rce(); break;
  }
  l.q = jsonio::field_double(j, where, "q", l.q);
  l.alpha = jsonio::field_double(j, where, "alpha", l.alpha);
  l.beta = jsonio::field_double(j, where, "beta", l.beta);
  l.log_zero = jsonio::field_double(j, where, "log_zero", l.log_zero);
  jsonio::validate_as_config(where, [&] { l.validate(); });
  return l;
}

inline Json encode_method_spec(const MethodSpec& m) {
  Json j = Json::object();
  j["kind"] = method_kind_name(m.kind);
  j["context_len"] = m.context_len;
  return j;
}

inline MethodSpec decode_method_spec(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"kind", "context_len"});
  MethodSpec m;
  m.kind = method_kind_from_name(
      jsonio::as_string(jsonio::req_field(j, where, "kind"), where + ".kind"));
  m.context_len = jsonio::field_int(j, where, "context_len", m.context_len);
  return m;
}

inline Json encode_noise(const NoiseSpec& n) {
  Json j = Json::object();
  j["kind"] = noise_kind_name(n.kind);
  j["rate"] = n.rate;
  if (n.confusion.rows() > 0) j["confusion"] = encode_matrix(n.confusion);
  return j;
}

inline NoiseSpec decode_noise(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"kind", "rate", "confusion"});
  NoiseSpec n;
  n.kind = noise_kind_from_name(
      jsonio::as_string(jsonio::req_field(j, where, "kind"), where + ".kind"));
  n.rate = jsonio::field_double(j, where, "rate", n.rate);
  if (n.rate < 0.0 || n.rate > 1.0)
    throw InvalidValueError(where + ".rate: must be in [0, 1], got " + fmt_double(n.rate));
  if (const Json* v = jsonio::opt_field(j, "confusion"))
    n.confusion = decode_matrix(*v, where + ".confusion");
  return n;
}

inline Json encode_train_config(const TrainConfig& t) {
  Json j = Json::object();
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr0"] = t.lr0;
  j["momentum"] = t.momentum;
  j["loss"] = encode_loss(t.loss);
  j["seed"] = t.seed;
  return j;
}

inline TrainConfig decode_train_config(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"epochs", "batch_size", "lr0", "momentum", "loss", "seed"});
  TrainConfig t;
  t.epochs = jsonio::field_int(j, where, "epochs", t.epochs);
  t.batch_size = jsonio::field_int(j, where, "batch_size", t.batch_size);
  t.lr0 = jsonio::field_double(j, where, "lr0", t.lr0);
  t.momentum = jsonio::field_double(j, where, "momentum", t.momentum);
  if (const Json* v = jsonio::opt_field(j, "loss")) t.loss = decode_loss(*v, where + ".loss");
  t.seed = jsonio::field_u64(j, where, "seed", t.seed);
  jsonio::validate_as_config(where, [&] { t.validate(); });
  return t;
}

inline Json encode_upl_config(const UplConfig& u) {
  Json j = Json::object();
  j["k"] = u.k;
  j["selection"] = selection_name(u.selection);
  j["loss"] = encode_loss(u.loss);
  j["ensemble_size"] = u.ensemble_size;
  j["seed"] = u.seed;
  return j;
}

inline UplConfig decode_upl_config(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"k", "selection", "loss", "ensemble_size", "seed"});
  UplConfig u;
  u.k = jsonio::field_size(j, where, "k", u.k);
  if (const Json* v = jsonio::opt_field(j, "selection"))
    u.selection = selection_from_name(jsonio::as_string(*v, where + ".selection"));
  if (const Json* v = jsonio::opt_field(j, "loss")) u.loss = decode_loss(*v, where + ".loss");
  u.ensemble_size = jsonio::field_size(j, where, "ensemble_size", u.ensemble_size);
  u.seed = jsonio::field_u64(j, where, "seed", u.seed);
  jsonio::validate_as_config(where, [&] { u.validate(); });
  return u;
}

inline Json encode_method_state(const MethodState& s) {
  Json j = Json::object();
  j["kind"] = method_kind_name(s.kind);
  j["context_len"] = s.context_len;
  j["prompt"] = encode_matrix(s.prompt);
  j["vocab_copy"] = encode_matrix(s.vocab_copy);
  j["classifier_rows"] = encode_matrix(s.classifier_rows);
  j["encoder_copy"] = s.has_encoder_copy ? encode_encoder_weights(s.encoder_copy) : Json(nullptr);
  Json mom = Json::array();
  for (const Matrix& m : s.momentum) mom.push_back(encode_matrix(m));
  j["momentum"] = std::move(mom);
  return j;
}

inline MethodState decode_method_state(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"kind", "context_len", "prompt", "vocab_copy", "classifier_rows",
                                "encoder_copy", "momentum"});
  MethodState s;
  s.kind = method_kind_from_name(
      jsonio::as_string(jsonio::req_field(j, where, "kind"), where + ".kind"));
  s.context_len = jsonio::field_size(j, where, "context_len", 0);
  s.prompt = decode_matrix(jsonio::req_field(j, where, "prompt"), where + ".prompt");
  s.vocab_copy = decode_matrix(jsonio::req_field(j, where, "vocab_copy"), where + ".vocab_copy");
  s.classifier_rows =
      decode_matrix(jsonio::req_field(j, where, "classifier_rows"), where + ".classifier_rows");
  const Json& enc = jsonio::req_field(j, where, "encoder_copy");
  if (!enc.is_null()) {
    s.encoder_copy = decode_encoder_weights(enc, where + ".encoder_copy");
    s.has_encoder_copy = true;
  }
  const Json& mom = jsonio::req_field(j, where, "momentum");
  jsonio::expect_array(mom, where + ".momentum");
  for (std::size_t i = 0; i < mom.size(); ++i)
    s.momentum.push_back(decode_matrix(mom[i], where + ".momentum[" + std::to_string(i) + "]"));
  return s;
}

inline Json encode_epoch_stats(const EpochStats& e) {
  Json j = Json::object();
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["mean_loss"] = e.mean_loss;
  return j;
}

inline EpochStats decode_epoch_stats(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"epoch", "lr", "mean_loss"});
  EpochStats e;
  e.epoch = jsonio::field_int(j, where, "epoch", 0);
  e.lr = jsonio::field_double(j, where, "lr", 0.0);
  e.mean_loss = jsonio::field_double(j, where, "mean_loss", 0.0);
  return e;
}

inline Json encode_grad_ratio_point(const GradRatioPoint& p) {
  Json j = Json::object();
  j["epoch"] = p.epoch;
  j["noisy_norm"] = p.noisy_norm;
  j["clean_norm"] = p.clean_norm;
  j["ratio"] = jsonio::encode_ratio(p.ratio);
  return j;
}

inline GradRatioPoint decode_grad_ratio_point(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"epoch", "noisy_norm", "clean_norm", "ratio"});
  GradRatioPoint p;
  p.epoch = jsonio::field_int(j, where, "epoch", 0);
  p.noisy_norm = jsonio::field_double(j, where, "noisy_norm", 0.0);
  p.clean_norm = jsonio::field_double(j, where, "clean_norm", 0.0);
  p.ratio = jsonio::decode_ratio(jsonio::req_field(j, where, "ratio"), where + ".ratio");
  return p;
}

inline Json encode_run_report(const RunReport& r) {
  Json j = Json::object();
  j["world_seed"] = r.world_seed;
  j["method"] = r.method;
  j["context_len"] = r.context_len;
  j["noise_kind"] = noise_kind_name(r.noise_kind);
  j["noise_rate"] = r.noise_rate;
  j["loss"] = encode_loss(r.loss);
  j["accuracy"] = r.accuracy;
  Json history = Json::array();
  for (const EpochStats& e : r.history) history.push_back(encode_epoch_stats(e));
  j["history"] = std::move(history);
  Json trace = Json::array();
  for (const GradRatioPoint& p : r.trace) trace.push_back(encode_grad_ratio_point(p));
  j["trace"] = std::move(trace);
  j["pseudo_precision"] = jsonio::encode_optional(r.pseudo_precision);
  Json notes = Json::array();
  for (const std::string& n : r.notes) notes.push_back(n);
  j["notes"] = std::move(notes);
  j["wall_ms"] = r.wall_ms;
  j["error"] = r.error;
  return j;
}

inline RunReport decode_run_report(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where,
                     {"world_seed", "method", "context_len", "noise_kind", "noise_rate", "loss",
                      "accuracy", "history", "trace", "pseudo_precision", "notes", "wall_ms",
                      "error"});
  RunReport r;
  r.world_seed = jsonio::field_u64(j, where, "world_seed", 0);
  r.method = jsonio::field_string(j, where, "method", "");
  r.context_len = jsonio::field_size(j, where, "context_len", 0);
  r.noise_kind = noise_kind_from_name(jsonio::field_string(j, where, "noise_kind", "random"));
  r.noise_rate = jsonio::field_double(j, where, "noise_rate", 0.0);
  if (const Json* v = jsonio::opt_field(j, "loss")) r.loss = decode_loss(*v, where + ".loss");
  r.accuracy = jsonio::field_double(j, where, "accuracy", 0.0);
  if (const Json* v = jsonio::opt_field(j, "history")) {
    jsonio::expect_array(*v, where + ".history");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.history.push_back(
          decode_epoch_stats((*v)[i], where + ".history[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "trace")) {
    jsonio::expect_array(*v, where + ".trace");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.trace.push_back(
          decode_grad_ratio_point((*v)[i], where + ".trace[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "pseudo_precision"))
    r.pseudo_precision = jsonio::decode_optional(*v, where + ".pseudo_precision");
  if (const Json* v = jsonio::opt_field(j, "notes")) {
    jsonio::expect_array(*v, where + ".notes");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.notes.push_back(jsonio::as_string((*v)[i], where + ".notes[" + std::to_string(i) + "]"));
  }
  r.wall_ms = jsonio::field_double(j, where, "wall_ms", 0.0);
  r.error = jsonio::field_string(j, where, "error", "");
  return r;
}

inline Json encode_summary_row(const SummaryRow& s) {
  Json j = Json::object();
  j["method"] = s.method;
  j["context_len"] = s.context_len;
  j["noise_kind"] = noise_kind_name(s.noise_kind);
  j["noise_rate"] = s.noise_rate;
  j["loss"] = encode_loss(s.loss);
  j["count"] = s.count;
  j["mean_accuracy"] = s.mean_accuracy;
  j["std_accuracy"] = s.std_accuracy;
  j["mean_grad_ratio"] = jsonio::encode_optional(s.mean_grad_ratio);
  j["std_grad_ratio"] = jsonio::encode_optional(s.std_grad_ratio);
  j["mean_pseudo_precision"] = jsonio::encode_optional(s.mean_pseudo_precision);
  j["std_pseudo_precision"] = jsonio::encode_optional(s.std_pseudo_precision);
  return j;
}

inline SummaryRow decode_summary_row(const Json& j, const std::string& where) {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where,
                     {"method", "context_len", "noise_kind", "noise_rate", "loss", "count",
                      "mean_accuracy", "std_accuracy", "mean_grad_ratio", "std_grad_ratio",
                      "mean_pseudo_precision", "std_pseudo_precision"});
  SummaryRow s;
  s.method = jsonio::field_string(j, where, "method", "");
  s.context_len = jsonio::field_size(j, where, "context_len", 0);
  s.noise_kind = noise_kind_from_name(jsonio::field_string(j, where, "noise_kind", "random"));
  s.noise_rate = jsonio::field_double(j, where, "noise_rate", 0.0);
  if (const Json* v = jsonio::opt_field(j, "loss")) s.loss = decode_loss(*v, where + ".loss");
  s.count = jsonio::field_size(j, where, "count", 0);
  s.mean_accuracy = jsonio::field_double(j, where, "mean_accuracy", 0.0);
  s.std_accuracy = jsonio::field_double(j, where, "std_accuracy", 0.0);
  if (const Json* v = jsonio::opt_field(j, "mean_grad_ratio"))
    s.mean_grad_ratio = jsonio::decode_optional(*v, where + ".mean_grad_ratio");
  if (const Json* v = jsonio::opt_field(j, "std_grad_ratio"))
    s.std_grad_ratio = jsonio::decode_optional(*v, where + ".std_grad_ratio");
  if (const Json* v = jsonio::opt_field(j, "mean_pseudo_precision"))
    s.mean_pseudo_precision = jsonio::decode_optional(*v, where + ".mean_pseudo_precision");
  if (const Json* v = jsonio::opt_field(j, "std_pseudo_precision"))
    s.std_pseudo_precision = jsonio::decode_optional(*v, where + ".std_pseudo_precision");
  return s;
}

// The stored config_echo string must be a JSON document (the CLI stores the
// canonical compact dump of its effective config); it is embedded as an object
// so report files stay readable.
inline Json encode_sweep_report(const SweepReport& r) {
  Json j = Json::object();
  j["schema_version"] = r.schema_version;
  j["kind"] = "sweep_report";
  j["world"] = encode_world_config(r.world);
  j["train"] = encode_train_config(r.train);
  Json methods = Json::array();
  for (const MethodSpec& m : r.methods) methods.push_back(encode_method_spec(m));
  j["methods"] = std::move(methods);
  Json noise = Json::array();
  for (const NoiseSpec& n : r.noise) noise.push_back(encode_noise(n));
  j["noise"] = std::move(noise);
  Json losses = Json::array();
  for (const LossSpec& l : r.losses) losses.push_back(encode_loss(l));
  j["losses"] = std::move(losses);
  Json seeds = Json::array();
  for (std::uint64_t s : r.seeds) seeds.push_back(s);
  j["seeds"] = std::move(seeds);
  j["trace_attached"] = r.trace_attached;
  j["probe_size"] = r.probe_size;
  j["config_echo"] =
      r.config_echo.empty() ? Json(nullptr) : parse_json_text(r.config_echo, "config_echo");
  Json runs = Json::array();
  for (const RunReport& run : r.runs) runs.push_back(encode_run_report(run));
  j["runs"] = std::move(runs);
  Json summaries = Json::array();
  for (const SummaryRow& row : r.summaries) summaries.push_back(encode_summary_row(row));
  j["summaries"] = std::move(summaries);
  return j;
}

inline SweepReport decode_sweep_report(const Json& j, const std::string& where = "report") {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where,
                     {"schema_version", "kind", "world", "train", "methods", "noise", "losses",
                      "seeds", "trace_attached", "probe_size", "config_echo", "runs",
                      "summaries"});
  const int version =
      jsonio::as_int(jsonio::req_field(j, where, "schema_version"), where + ".schema_version");
  if (version != kReportSchemaVersion)
    throw InvalidValueError(where + ": unsupported schema_version " + std::to_string(version));
  const std::string kind = jsonio::field_string(j, where, "kind", "sweep_report");
  if (kind != "sweep_report")
    throw InvalidValueError(where + ": kind is \"" + kind + "\", not \"sweep_report\"");

  SweepReport r;
  r.schema_version = version;
  if (const Json* v = jsonio::opt_field(j, "world"))
    r.world = decode_world_config(*v, where + ".world");
  if (const Json* v = jsonio::opt_field(j, "train"))
    r.train = decode_train_config(*v, where + ".train");
  if (const Json* v = jsonio::opt_field(j, "methods")) {
    jsonio::expect_array(*v, where + ".methods");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.methods.push_back(
          decode_method_spec((*v)[i], where + ".methods[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "noise")) {
    jsonio::expect_array(*v, where + ".noise");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.noise.push_back(decode_noise((*v)[i], where + ".noise[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "losses")) {
    jsonio::expect_array(*v, where + ".losses");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.losses.push_back(decode_loss((*v)[i], where + ".losses[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "seeds")) {
    jsonio::expect_array(*v, where + ".seeds");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.seeds.push_back(jsonio::as_u64((*v)[i], where + ".seeds[" + std::to_string(i) + "]"));
  }
  r.trace_attached = jsonio::field_bool(j, where, "trace_attached", false);
  r.probe_size = jsonio::field_size(j, where, "probe_size", kProbeSize);
  if (const Json* v = jsonio::opt_field(j, "config_echo")) {
    if (!v->is_null()) r.config_echo = v->dump();
  }
  if (const Json* v = jsonio::opt_field(j, "runs")) {
    jsonio::expect_array(*v, where + ".runs");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.runs.push_back(decode_run_report((*v)[i], where + ".runs[" + std::to_string(i) + "]"));
  }
  if (const Json* v = jsonio::opt_field(j, "summaries")) {
    jsonio::expect_array(*v, where + ".summaries");
    for (std::size_t i = 0; i < v->size(); ++i)
      r.summaries.push_back(
          decode_summary_row((*v)[i], where + ".summaries[" + std::to_string(i) + "]"));
  }
  return r;
}

inline SweepReport parse_sweep_report(const std::string& text) {
  return decode_sweep_report(parse_json_text(text, "report"));
}

inline std::string render_report_json(const SweepReport& r) {
  return encode_sweep_report(r).dump(2) + "\n";
}

inline constexpr const char* kReportCsvHeader =
    "world_seed,method,context_len,noise_kind,noise_rate,loss_kind,q,accuracy,mean_grad_ratio,"
    "pseudo_precision,wall_ms";

// One CSV row per successful run, then a mean and a std row per summary group.
// Failed runs live only in the JSON form, which keeps their error text. The q
// column is populated only where q has an effect.
inline std::string render_report_csv(const SweepReport& rep) {
  std::string out = kReportCsvHeader;
  out += '\n';
  const auto q_cell = [](const LossSpec& l) {
    return l.kind == LossKind::GCE ? fmt_double(l.q) : std::string();
  };
  const auto opt_cell = [](const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string();
  };
  for (const RunReport& r : rep.runs) {
    if (r.failed()) continue;
    out += std::to_string(r.world_seed);
    out += ',';
    out += r.method;
    out += ',';
    out += std::to_string(r.context_len);
    out += ',';
    out += noise_kind_name(r.noise_kind);
    out += ',';
    out += fmt_double(r.noise_rate);
    out += ',';
    out += loss_kind_name(r.loss.kind);
    out += ',';
    out += q_cell(r.loss);
    out += ',';
    out += fmt_double(r.accuracy);
    out += ',';
    out += opt_cell(trace_mean_ratio(r));
    out += ',';
    out += opt_cell(r.pseudo_precision);
    out += ',';
    out += fmt_double(r.wall_ms);
    out += '\n';
  }
  for (const SummaryRow& s : rep.summaries) {
    const struct {
      const char* tag;
      double accuracy;
      std::optional<double> ratio;
      std::optional<double> precision;
    } rows[] = {
        {"mean", s.mean_accuracy, s.mean_grad_ratio, s.mean_pseudo_precision},
        {"std", s.std_accuracy, s.std_grad_ratio, s.std_pseudo_precision},
    };
    for (const auto& row : rows) {
      out += row.tag;
      out += ',';
      out += s.method;
      out += ',';
      out += std::to_string(s.context_len);
      out += ',';
      out += noise_kind_name(s.noise_kind);
      out += ',';
      out += fmt_double(s.noise_rate);
      out += ',';
      out += loss_kind_name(s.loss.kind);
      out += ',';
      out += q_cell(s.loss);
      out += ',';
      out += fmt_double(row.accuracy);
      out += ',';
      out += opt_cell(row.ratio);
      out += ',';
      out += opt_cell(row.precision);
      out += ',';  // wall_ms has no meaning for an aggregate row
      out += '\n';
    }
  }
  return out;
}

enum class ReportFormat { Json, Csv };

inline void emit_report(const SweepReport& rep, ReportFormat format, const std::string& path) {
  if (rep.runs.empty()) throw PreconditionError("emit_report: report has no runs");
  write_text_file(path,
                  format == ReportFormat::Json ? render_report_json(rep) : render_report_csv(rep));
}

inline std::string render_dataset_csv(const EmbeddingDataset& ds) {
  ds.validate();
  std::string out = "index,true_label,observed_label,clean_flag";
  for (std::size_t c = 0; c < ds.images.cols(); ++c) out += ",e" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += std::to_string(ds.true_labels[i]);
    out += ',';
    out += std::to_string(ds.observed_labels[i]);
    out += ',';
    out += ds.clean_flags[i] ? '1' : '0';
    for (std::size_t c = 0; c < ds.images.cols(); ++c) {
      out += ',';
      out += fmt_double(ds.images.at(i, c));
    }
    out += '\n';
  }
  return out;
}

namespace jsonio {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::size_t csv_size(const std::string& s, std::size_t line_no, const char* col) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidValueError("dataset csv line " + std::to_string(line_no) + ": bad " + col +
                            " \"" + s + "\"");
  return v;
}

inline double csv_double(const std::string& s, std::size_t line_no, const char* col) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidValueError("dataset csv line " + std::to_string(line_no) + ": bad " + col +
                            " \"" + s + "\"");
  return v;
}

}  // namespace jsonio

inline EmbeddingDataset parse_dataset_csv(const std::string& text, std::size_t num_classes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidValueError("dataset csv: empty input");
  const std::vector<std::string> header = jsonio::split_csv_line(line);
  if (header.size() < 4 || header[0] != "index" || header[1] != "true_label" ||
      header[2] != "observed_label" || header[3] != "clean_flag")
    throw InvalidValueError("dataset csv: unexpected header \"" + line + "\"");
  for (std::size_t c = 4; c < header.size(); ++c)
    if (header[c] != "e" + std::to_string(c - 4))
      throw InvalidValueError("dataset csv: unexpected embedding column \"" + header[c] + "\"");
  const std::size_t dim = header.size() - 4;

  std::vector<std::vector<double>> rows;
  EmbeddingDataset ds;
  ds.num_classes = num_classes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = jsonio::split_csv_line(line);
    if (cells.size() != header.size())
      throw InvalidValueError("dataset csv line " + std::to_string(line_no) +
                              ": expected " + std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()));
    const std::size_t index = jsonio::csv_size(cells[0], line_no, "index");
    if (index != rows.size())
      throw InvalidValueError("dataset csv line " + std::to_string(line_no) +
                              ": index out of order");
    ds.true_labels.push_back(jsonio::csv_size(cells[1], line_no, "true_label"));
    ds.observed_labels.push_back(jsonio::csv_size(cells[2], line_no, "observed_label"));
    const std::size_t flag = jsonio::csv_size(cells[3], line_no, "clean_flag");
    if (flag > 1)
      throw InvalidValueError("dataset csv line " + std::to_string(line_no) +
                              ": clean_flag must be 0 or 1");
    ds.clean_flags.push_back(static_cast<std::uint8_t>(flag));
    std::vector<double> row(dim);
    for (std::size_t c = 0; c < dim; ++c)
      row[c] = jsonio::csv_double(cells[4 + c], line_no, header[4 + c].c_str());
    rows.push_back(std::move(row));
  }
  ds.images = Matrix(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < dim; ++c) ds.images.at(i, c) = rows[i][c];
  ds.validate();
  return ds;
}

struct DatasetSidecar {
  WorldConfig world;
  std::string split;
  std::optional<NoiseSpec> noise;
};

inline Json encode_dataset_sidecar(const DatasetSidecar& s) {
  Json j = Json::object();
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "dataset";
  j["world"] = encode_world_config(s.world);
  j["split"] = s.split;
  j["noise"] = s.noise ? encode_noise(*s.noise) : Json(nullptr);
  return j;
}

inline DatasetSidecar decode_dataset_sidecar(const Json& j, const std::string& where = "dataset") {
  jsonio::expect_object(j, where);
  jsonio::check_keys(j, where, {"schema_version", "kind", "world", "split", "noise", "config_echo"});
  const int version =
      jsonio::as_int(jsonio::req_field(j, where, "schema_version"), where + ".schema_version");
  if (version != kReportSchemaVersion)
    throw InvalidValueError(where + ": unsupported schema_version " + std::to_string(version));
  const std::string kind = jsonio::field_string(j, where, "kind", "dataset");
  if (kind != "dataset")
    throw InvalidValueError(where + ": kind is \"" + kind + "\", not \"dataset\"");
  DatasetSidecar s;
  s.world = decode_world_config(jsonio::req_field(j, where, "world"), where + ".world");
  s.split = jsonio::as_string(jsonio::req_field(j, where, "split"), where + ".split");
  const Json& noise = jsonio::req_field(j, where, "noise");
  if (!noise.is_null()) s.noise = decode_noise(noise, where + ".noise");
  return s;
}

}  // namespace promptlab
