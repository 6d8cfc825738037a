#include "depgraph/config.hpp"

#include <array>
#include <set>

#include "depgraph/checkpoint.hpp"
#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"
#include "json.hpp"

namespace depgraph {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kReprNames{"spg", "seg", "spv", "sph", "sta", "atp"};

template <typename T>
void check_type(const json& v, const std::string& where) {
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_unsigned_v<T>) {
    ok = v.is_number_unsigned();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    ok = v.is_string();
  } else {
    ok = v.is_array();
    if (ok)
      for (const auto& e : v) check_type<typename T::value_type>(e, where);
  }
  if (!ok) throw ConfigError("config key '" + where + "' has the wrong type");
}

// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config key '" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    const std::string path = where_.empty() ? key : where_ + "." + key;
    const json& v = j_.at(key);
    check_type<T>(v, path);
    if constexpr (std::is_same_v<T, std::array<std::size_t, 3>> || std::is_same_v<T, std::array<std::size_t, 2>>) {
      if (v.size() != out.size()) {
        throw ConfigError("config key '" + path + "' needs " + std::to_string(out.size()) + " entries");
      }
    }
    out = v.get<T>();
  }

  std::optional<Section> child(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Section(j_.at(key), where_.empty() ? key : where_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + (where_.empty() ? k : where_ + "." + k) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

json synth_json(const SynthConfig& s) {
  return {{"train_count", s.train_count},
          {"validation_count", s.validation_count},
          {"test_count", s.test_count},
          {"min_frames", s.min_frames},
          {"max_frames", s.max_frames},
          {"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"category_weights", s.category_weights},
          {"dropout_rate", s.dropout_rate},
          {"pixel_noise", s.pixel_noise},
          {"slice_length", s.slice_length}};
}

void read_synth(Section s, SynthConfig& c) {
  s.get("train_count", c.train_count);
  s.get("validation_count", c.validation_count);
  s.get("test_count", c.test_count);
  s.get("min_frames", c.min_frames);
  s.get("max_frames", c.max_frames);
  s.get("height", c.height);
  s.get("width", c.width);
  s.get("channels", c.channels);
  std::vector<double> weights;
  s.get("category_weights", weights);
  if (!weights.empty()) {
    if (weights.size() != kNumCategories) throw ConfigError("corpus.synth.category_weights needs 4 entries");
    std::copy(weights.begin(), weights.end(), c.category_weights.begin());
  }
  s.get("dropout_rate", c.dropout_rate);
  s.get("pixel_noise", c.pixel_noise);
  s.get("slice_length", c.slice_length);
  s.finish();
}

json mtb_json(const MtbConfig& m) {
  return {{"slice_length", m.slice_length},       {"height", m.height},
          {"width", m.width},                     {"channels", m.channels},
          {"spatial_factors", m.spatial_factors}, {"temporal_factors", m.temporal_factors},
          {"conv_channels", m.conv_channels},     {"conv_depth", m.conv_depth},
          {"conv_kernel", m.conv_kernel},         {"encoding_channels", m.encoding_channels},
          {"temporal_kernel", m.temporal_kernel}, {"output_dim", m.output_dim}};
}

void read_mtb(Section s, MtbConfig& m) {
  s.get("slice_length", m.slice_length);
  s.get("height", m.height);
  s.get("width", m.width);
  s.get("channels", m.channels);
  s.get("spatial_factors", m.spatial_factors);
  s.get("temporal_factors", m.temporal_factors);
  s.get("conv_channels", m.conv_channels);
  s.get("conv_depth", m.conv_depth);
  s.get("conv_kernel", m.conv_kernel);
  s.get("encoding_channels", m.encoding_channels);
  s.get("temporal_kernel", m.temporal_kernel);
  s.get("output_dim", m.output_dim);
  s.finish();
}

json dfe_json(const DfeConfig& d) {
  return {{"num_scales", d.num_scales},
          {"feature_dim", d.feature_dim},
          {"encoder_widths", d.encoder_widths},
          {"decoder_widths", d.decoder_widths},
          {"regressor_bias_init", d.regressor_bias_init}};
}

void read_dfe(Section s, DfeConfig& d) {
  s.get("num_scales", d.num_scales);
  s.get("feature_dim", d.feature_dim);
  s.get("encoder_widths", d.encoder_widths);
  s.get("decoder_widths", d.decoder_widths);
  s.get("regressor_bias_init", d.regressor_bias_init);
  s.finish();
}

json adam_json(const AdamConfig& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

void read_adam(Section s, AdamConfig& a) {
  s.get("learning_rate", a.learning_rate);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("epsilon", a.epsilon);
  s.finish();
  if (a.learning_rate < 0.0 || a.beta1 < 0.0 || a.beta1 >= 1.0 || a.beta2 < 0.0 || a.beta2 >= 1.0 ||
      a.epsilon <= 0.0) {
    throw ConfigError("optimizer settings out of range");
  }
}

json short_term_json(const ShortTermConfig& c) {
  return {{"mtb", mtb_json(c.mtb)},
          {"dfe", dfe_json(c.dfe)},
          {"loss_weights", {{"w1", c.weights.w1}, {"w2", c.weights.w2}, {"w3", c.weights.w3}, {"w4", c.weights.w4}}},
          {"optimizer", adam_json(c.adam)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"slice_length", c.slice_length},
          {"stride", c.stride},
          {"label_scale", c.label_scale},
          {"center_frames", c.center_frames}};
}

void read_short_term(Section s, ShortTermConfig& c) {
  std::string preset = "toy";
  s.get("preset", preset);
  if (preset == "reference") {
    c.mtb = MtbConfig::reference();
    c.dfe = DfeConfig::reference();
  } else if (preset != "toy") {
    throw ConfigError("short_term.preset must be 'toy' or 'reference', got '" + preset + "'");
  }
  if (auto m = s.child("mtb")) read_mtb(*m, c.mtb);
  if (auto d = s.child("dfe")) read_dfe(*d, c.dfe);
  if (auto w = s.child("loss_weights")) {
    w->get("w1", c.weights.w1);
    w->get("w2", c.weights.w2);
    w->get("w3", c.weights.w3);
    w->get("w4", c.weights.w4);
    w->finish();
  }
  if (auto a = s.child("optimizer")) read_adam(*a, c.adam);
  s.get("batch_size", c.batch_size);
  s.get("steps", c.steps);
  s.get("slice_length", c.slice_length);
  s.get("stride", c.stride);
  s.get("label_scale", c.label_scale);
  s.get("center_frames", c.center_frames);
  s.finish();
}

json encoder_json(const EncoderSection& e) {
  return {{"repr", std::string(to_string(e.repr))},
          {"grid_bins", e.spectral.grid_bins},
          {"top_k", e.spectral.top_k},
          {"remove_mean", e.spectral.remove_mean},
          {"windows", e.windows}};
}

void read_encoder(Section s, EncoderSection& e) {
  std::string repr(to_string(e.repr));
  s.get("repr", repr);
  e.repr = parse_repr(repr);
  s.get("grid_bins", e.spectral.grid_bins);
  s.get("top_k", e.spectral.top_k);
  s.get("remove_mean", e.spectral.remove_mean);
  s.get("windows", e.windows);
  s.finish();
  if (e.spectral.grid_bins < 2 || e.spectral.top_k == 0 || e.spectral.top_k > e.spectral.grid_bins) {
    throw ConfigError("encoder: need grid_bins >= 2 and 1 <= top_k <= grid_bins");
  }
  if (e.windows.empty()) throw ConfigError("encoder.windows must not be empty");
  std::set<std::size_t> seen;
  for (auto w : e.windows)
    if (w == 0 || !seen.insert(w).second) throw ConfigError("encoder.windows must be distinct positive spans");
}

json head_json(const HeadSection& h) {
  return {{"heads", h.heads},
          {"hidden", h.hidden},
          {"fc", h.fc},
          {"leaky_slope", h.leaky_slope},
          {"conv_channels", h.conv_channels},
          {"conv_kernel", h.conv_kernel},
          {"optimizer", adam_json(h.train.adam)},
          {"epochs", h.train.epochs},
          {"init_bias_to_label_mean", h.train.init_bias_to_label_mean}};
}

void read_head(Section s, HeadSection& h) {
  s.get("heads", h.heads);
  s.get("hidden", h.hidden);
  s.get("fc", h.fc);
  s.get("leaky_slope", h.leaky_slope);
  s.get("conv_channels", h.conv_channels);
  s.get("conv_kernel", h.conv_kernel);
  if (auto a = s.child("optimizer")) read_adam(*a, h.train.adam);
  s.get("epochs", h.train.epochs);
  s.get("init_bias_to_label_mean", h.train.init_bias_to_label_mean);
  s.finish();
  if (h.heads == 0 || h.hidden == 0 || h.fc[0] == 0 || h.fc[1] == 0 || h.fc[2] != 1) {
    throw ConfigError("head: heads/hidden must be positive and fc must end in a single output");
  }
  if (h.conv_kernel % 2 == 0) throw ConfigError("head.conv_kernel must be odd");
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"threads", c.threads},
          {"corpus", {{"manifest", c.corpus.manifest}, {"synth", synth_json(c.corpus.synth)}}},
          {"short_term", short_term_json(c.short_term)},
          {"encoder", encoder_json(c.encoder)},
          {"head", head_json(c.head)}};
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' must look like key.path=value");
  const std::string key = spec.substr(0, eq);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + spec + "' has an empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = parse_value(spec.substr(eq + 1));
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + spec + "' descends into a non-object");
    node = &next;
    start = dot + 1;
  }
}

}  // namespace

std::string_view to_string(Repr r) { return kReprNames.at(static_cast<std::size_t>(r)); }

Repr parse_repr(std::string_view text) {
  for (std::size_t i = 0; i < kReprNames.size(); ++i)
    if (kReprNames[i] == text) return static_cast<Repr>(i);
  throw ConfigError("unknown representation '" + std::string(text) + "' (expected spg, seg, spv, sph, sta or atp)");
}

std::uint64_t RunConfig::synth_seed() const { return seed; }
std::uint64_t RunConfig::short_term_seed() const { return derive_seed(seed, 10); }
std::uint64_t RunConfig::head_seed() const { return derive_seed(seed, 20); }

ShortTermConfig RunConfig::resolved_short_term() const {
  ShortTermConfig c = short_term;
  c.seed = short_term_seed();
  return c;
}

RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  root.get("out_dir", c.out_dir);
  root.get("threads", c.threads);
  if (auto s = root.child("corpus")) {
    s->get("manifest", c.corpus.manifest);
    if (auto syn = s->child("synth")) read_synth(*syn, c.corpus.synth);
    s->finish();
  }
  if (auto s = root.child("short_term")) read_short_term(*s, c.short_term);
  if (auto s = root.child("encoder")) read_encoder(*s, c.encoder);
  if (auto s = root.child("head")) read_head(*s, c.head);
  root.finish();
  c.short_term.seed = c.short_term_seed();
  c.head.train.seed = c.head_seed();
  c.short_term.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, overrides);
}

std::string run_config_to_json(const RunConfig& config, int indent) { return to_json(config).dump(indent); }

std::string section_json(const RunConfig& config, std::string_view section) {
  const json doc = to_json(config);
  const std::string key(section);
  if (!doc.contains(key) || !doc.at(key).is_object()) throw ConfigError("no config section '" + key + "'");
  return doc.at(key).dump();
}

StageFingerprints stage_fingerprints(const RunConfig& config) {
  auto fold = [](std::uint64_t parent, const std::string& text) {
    return fnv1a64(std::to_string(parent) + "|" + text);
  };
  StageFingerprints f;
  std::string corpus = section_json(config, "corpus");
  // A manifest's content, not just its path, decides the corpus.
  if (!config.corpus.manifest.empty()) {
    try {
      corpus += read_text_file(config.corpus.manifest);
    } catch (const IoError&) {
    }
  }
  f.corpus = fold(config.seed, corpus);
  f.short_term = fold(f.corpus, section_json(config, "short_term"));
  f.features = fold(f.short_term, "features");
  f.encoded = fold(f.features, section_json(config, "encoder"));
  f.head = fold(f.encoded, section_json(config, "head"));
  return f;
}

}  // namespace depgraph
