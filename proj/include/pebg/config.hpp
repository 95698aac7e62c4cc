#pragma once

// Flat `key = value` configuration shared by the pipeline stages. Lines
// starting with `#` (or the tail of a line after `#`) are comments. Keys with
// a `kt.` prefix configure the knowledge-tracing stage; the rest configure
// splitting and pre-training.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pebg/dataset.hpp"
#include "pebg/error.hpp"
#include "pebg/kt.hpp"
#include "pebg/pretrain.hpp"

namespace pebg {

struct PipelineConfig {
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::vector<std::string> attributes{"response_time", "question_type"};
  PretrainConfig pretrain;
  KtConfig kt;
  KtMode kt_mode = KtMode::kPretrainedFinetune;
  /// Experiment input: a dataset file, or a raw CSV ingested on the fly.
  std::string dataset;
  std::size_t min_seq_len = 3;

  /// Pushes the shared seed into both stages.
  void apply_seed(std::uint64_t s) {
    seed = s;
    pretrain.seed = s;
    kt.seed = s;
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("bad value '" + value + "' for " + key);
  return out;
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

template <class T>
Setter number(T PipelineConfig::*field) {
  return [field](PipelineConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}
template <class T>
Setter pretrain_number(T PretrainConfig::*field) {
  return [field](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.pretrain.*field = parse_number<T>(k, v);
  };
}
template <class T>
Setter kt_number(T KtConfig::*field) {
  return [field](PipelineConfig& c, const std::string& k, const std::string& v) { c.kt.*field = parse_number<T>(k, v); };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.apply_seed(parse_number<std::uint64_t>(k, v));
       }},
      {"train_fraction", number(&PipelineConfig::train_fraction)},
      {"min_seq_len", number(&PipelineConfig::min_seq_len)},
      {"dataset", [](PipelineConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"attributes", [](PipelineConfig& c, const std::string&, const std::string& v) {
         c.attributes = split_list(v);
         for (const auto& a : c.attributes) {
           const auto& known = known_attribute_names();
           if (std::find(known.begin(), known.end(), a) == known.end())
             throw ConfigError("unknown attribute feature '" + a + "'");
         }
       }},
      {"vertex_dim", pretrain_number(&PretrainConfig::vertex_dim)},
      {"embedding_dim", pretrain_number(&PretrainConfig::embedding_dim)},
      {"lambda", pretrain_number(&PretrainConfig::lambda)},
      {"learning_rate", pretrain_number(&PretrainConfig::learning_rate)},
      {"pair_batch_size", pretrain_number(&PretrainConfig::pair_batch_size)},
      {"question_batch_size", pretrain_number(&PretrainConfig::question_batch_size)},
      {"epochs", pretrain_number(&PretrainConfig::epochs)},
      {"neg_ratio", pretrain_number(&PretrainConfig::neg_ratio)},
      {"dropout_keep", pretrain_number(&PretrainConfig::dropout_keep)},
      {"validation_fraction", pretrain_number(&PretrainConfig::validation_fraction)},
      {"ablation", [](PipelineConfig& c, const std::string&, const std::string& v) {
         c.pretrain.ablation = Ablation::parse(v);
       }},
      {"pair_mode", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         if (v == "sampled") c.pretrain.pair_mode = PairMode::kSampled;
         else if (v == "full") c.pretrain.pair_mode = PairMode::kFull;
         else throw ConfigError("bad value '" + v + "' for " + k + " (expected sampled or full)");
       }},
      {"kt.mode", [](PipelineConfig& c, const std::string&, const std::string& v) { c.kt_mode = parse_kt_mode(v); }},
      {"kt.hidden_dim", kt_number(&KtConfig::hidden_dim)},
      {"kt.embedding_dim", kt_number(&KtConfig::embedding_dim)},
      {"kt.learning_rate", kt_number(&KtConfig::learning_rate)},
      {"kt.batch_size", kt_number(&KtConfig::batch_size)},
      {"kt.max_seq_len", kt_number(&KtConfig::max_seq_len)},
      {"kt.epochs", kt_number(&KtConfig::epochs)},
      {"kt.dropout_keep", kt_number(&KtConfig::dropout_keep)},
      {"kt.validation_fraction", kt_number(&KtConfig::validation_fraction)},
      {"kt.patience", kt_number(&KtConfig::patience)},
  };
  return table;
}

}  // namespace detail

/// Applies one setting; unknown keys and malformed values are ConfigErrors.
inline void set_option(PipelineConfig& c, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, s] : detail::setters()) out.push_back(k);
  return out;
}

/// Reads settings on top of `base`; later lines win.
inline PipelineConfig read_config(std::istream& in, PipelineConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    if (key.empty()) throw ParseError(line_no, "missing key");
    try {
      set_option(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return read_config(in, std::move(base));
}

/// Every resolved setting in canonical `key = value` form.
inline std::string describe(const PipelineConfig& c) {
  std::ostringstream out;
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  const auto& p = c.pretrain;
  const auto& k = c.kt;
  using detail::format_double;
  out << "seed = " << c.seed << '\n'
      << "train_fraction = " << format_double(c.train_fraction) << '\n'
      << "min_seq_len = " << c.min_seq_len << '\n'
      << "attributes = " << list(c.attributes) << '\n'
      << "vertex_dim = " << p.vertex_dim << '\n'
      << "embedding_dim = " << p.embedding_dim << '\n'
      << "lambda = " << format_double(p.lambda) << '\n'
      << "learning_rate = " << format_double(p.learning_rate) << '\n'
      << "pair_batch_size = " << p.pair_batch_size << '\n'
      << "question_batch_size = " << p.question_batch_size << '\n'
      << "epochs = " << p.epochs << '\n'
      << "neg_ratio = " << p.neg_ratio << '\n'
      << "dropout_keep = " << format_double(p.dropout_keep) << '\n'
      << "validation_fraction = " << format_double(p.validation_fraction) << '\n'
      << "ablation = " << p.ablation.to_string() << '\n'
      << "pair_mode = " << (p.pair_mode == PairMode::kFull ? "full" : "sampled") << '\n'
      << "kt.mode = " << to_string(c.kt_mode) << '\n'
      << "kt.hidden_dim = " << k.hidden_dim << '\n'
      << "kt.embedding_dim = " << k.embedding_dim << '\n'
      << "kt.learning_rate = " << format_double(k.learning_rate) << '\n'
      << "kt.batch_size = " << k.batch_size << '\n'
      << "kt.max_seq_len = " << k.max_seq_len << '\n'
      << "kt.epochs = " << k.epochs << '\n'
      << "kt.dropout_keep = " << format_double(k.dropout_keep) << '\n'
      << "kt.validation_fraction = " << format_double(k.validation_fraction) << '\n'
      << "kt.patience = " << k.patience << '\n';
  return out.str();
}

/// 64-bit FNV-1a of `describe(c)`, as 16 hex digits.
inline std::string fingerprint(const PipelineConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : describe(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pebg
