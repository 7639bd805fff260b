#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"
#include "lmac/plot.hpp"
#include "lmac/tensor_io.hpp"

namespace lmac::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Config -----------------------------------------------------------------------

namespace {

json train_json(const InterpreterTrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"loss", c.loss.to_json()}};
}

void merge_train(InterpreterTrainConfig& c, const json& j) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("loss")) c.loss = MaskLossConfig::from_json(j.at("loss"), c.loss);
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("--methods needs at least one method name");
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  finetune.epochs = 10;
  finetune.loss.lambda_g = 4.0;
  finetune.loss.cct = 0.6;
}

void RunConfig::validate() const {
  dataset.validate();
  arch.validate();
  classifier.validate();
  interpreter.validate();
  finetune.validate();
  baselines.validate();
  roar.validate();
  if (roar_train_per_class < 0) throw ConfigError("roar train_per_class must be >= 0");
  if (randomize_items < 1) throw ConfigError("randomize items must be >= 1");
  const auto& known = method_names();
  for (const auto& m : methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError("unknown attribution method '" + m + "'");
    }
  }
}

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"dataset",
       {{"train_per_class", dataset.train_per_class},
        {"valid_per_class", dataset.valid_per_class},
        {"test_per_class", dataset.test_per_class},
        {"contamination", std::string(to_string(dataset.contamination))},
        {"snr_db", dataset.snr_db}}},
      {"classifier",
       {{"arch", arch.to_json()},
        {"epochs", classifier.epochs},
        {"batch_size", classifier.batch_size},
        {"lr", classifier.lr}}},
      {"interpreter", train_json(interpreter)},
      {"finetune", train_json(finetune)},
      {"baselines", baselines.to_json()},
      {"evaluate",
       {{"methods", methods}, {"domain", std::string(lmac::to_string(domain))}, {"hard_threshold", hard_threshold}}},
      {"roar",
       {{"percents", roar.percents}, {"seeds", roar.seeds}, {"train_per_class", roar_train_per_class}}},
      {"randomize", {{"method", randomize_method}, {"items", randomize_items}}},
  };
}

void RunConfig::merge(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  seed = j.value("seed", seed);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    dataset.train_per_class = d.value("train_per_class", dataset.train_per_class);
    dataset.valid_per_class = d.value("valid_per_class", dataset.valid_per_class);
    dataset.test_per_class = d.value("test_per_class", dataset.test_per_class);
    if (d.contains("contamination")) dataset.contamination = parse_contamination(d.at("contamination").get<std::string>());
    dataset.snr_db = d.value("snr_db", dataset.snr_db);
  }
  if (j.contains("classifier")) {
    const auto& c = j.at("classifier");
    if (c.contains("arch")) arch = ClassifierArch::from_json(c.at("arch"));
    classifier.epochs = c.value("epochs", classifier.epochs);
    classifier.batch_size = c.value("batch_size", classifier.batch_size);
    classifier.lr = c.value("lr", classifier.lr);
  }
  if (j.contains("interpreter")) merge_train(interpreter, j.at("interpreter"));
  if (j.contains("finetune")) merge_train(finetune, j.at("finetune"));
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    if (b.contains("smoothgrad")) {
      const auto& s = b.at("smoothgrad");
      baselines.smoothgrad.n_samples = s.value("n_samples", baselines.smoothgrad.n_samples);
      baselines.smoothgrad.sigma_fraction = s.value("sigma_fraction", baselines.smoothgrad.sigma_fraction);
    }
    if (b.contains("ig")) baselines.ig.n_steps = b.at("ig").value("n_steps", baselines.ig.n_steps);
    baselines.batch_size = b.value("batch_size", baselines.batch_size);
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    if (e.contains("methods")) methods = e.at("methods").get<std::vector<std::string>>();
    if (e.contains("domain")) domain = parse_domain(e.at("domain").get<std::string>());
    hard_threshold = e.value("hard_threshold", hard_threshold);
  }
  if (j.contains("roar")) {
    const auto& r = j.at("roar");
    if (r.contains("percents")) roar.percents = r.at("percents").get<std::vector<double>>();
    if (r.contains("seeds")) roar.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
    roar_train_per_class = r.value("train_per_class", roar_train_per_class);
  }
  if (j.contains("randomize")) {
    const auto& r = j.at("randomize");
    randomize_method = r.value("method", randomize_method);
    randomize_items = r.value("items", randomize_items);
  }
}

// Output helpers -------------------------------------------------------------------

namespace {

void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : os_(path, std::ios::binary | std::ios::trunc) {
    if (!os_) throw Error("cannot write " + path.string());
  }
  void write(const json& j) { os_ << j.dump() << "\n" << std::flush; }

 private:
  std::ofstream os_;
};

void require_file(const std::optional<std::string>& path, const std::string& what) {
  if (!path || path->empty()) throw MissingPrerequisite(what + " required (none given)");
  if (!fs::exists(*path)) throw MissingPrerequisite(what + " required: " + *path + " does not exist");
}

Classifier load_classifier(const std::optional<std::string>& path) {
  require_file(path, "classifier checkpoint");
  return Classifier::load(*path);
}

std::optional<Decoder> load_decoder(const std::optional<std::string>& path, bool required) {
  if (!required && (!path || path->empty())) return std::nullopt;
  require_file(path, "decoder checkpoint");
  return Decoder::load(*path);
}

Dataset load_dataset(const std::optional<std::string>& path) {
  require_file(path, "dataset directory");
  return read_dataset(*path);
}

bool uses_decoder(const std::vector<std::string>& methods) {
  return std::any_of(methods.begin(), methods.end(), [](const std::string& m) { return m.rfind("lmac", 0) == 0; });
}

}  // namespace

void write_png(const fs::path& path, const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("png export needs a 2-D map");
  const auto h = map.dim(0), w = map.dim(1);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      const double v = std::clamp(static_cast<double>(map.at((h - 1 - r) * w + c)), 0.0, 1.0);
      pixels[static_cast<std::size_t>(r * w + c)] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  write_gray_png(path, pixels, static_cast<int>(w), static_cast<int>(h));
}

// Commands -------------------------------------------------------------------------

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool force = false;
  std::optional<double> lambda_g;
  std::optional<double> cct;
  std::optional<std::string> domain;
  std::optional<std::string> methods;
  std::optional<double> snr;
  std::optional<std::string> contamination;
  std::optional<double> hard_threshold;
  std::optional<std::string> data;
  std::optional<std::string> classifier;
  std::optional<std::string> decoder;
  std::optional<std::string> input;
  std::string split = "test";
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (f.config) {
    if (!fs::exists(*f.config)) throw MissingPrerequisite("config file " + *f.config + " does not exist");
    std::ifstream is(*f.config);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config " + *f.config + ": " + e.what());
    }
    cfg.merge(j);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.lambda_g) cfg.finetune.loss.lambda_g = *f.lambda_g;
  if (f.cct) cfg.finetune.loss.cct = *f.cct;
  if (f.domain) cfg.domain = parse_domain(*f.domain);
  if (f.methods) {
    cfg.methods = split_csv(*f.methods);
  }
  if (f.snr) cfg.dataset.snr_db = *f.snr;
  if (f.contamination) cfg.dataset.contamination = parse_contamination(*f.contamination);
  if (f.hard_threshold) cfg.hard_threshold = *f.hard_threshold;
  cfg.dataset.seed = cfg.seed;
  cfg.classifier.seed = cfg.seed;
  cfg.interpreter.seed = cfg.seed;
  cfg.finetune.seed = cfg.seed;
  cfg.baselines.smoothgrad.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

/// Creates the output directory and serializes the resolved config into it.
fs::path begin_run(const Flags& f, const RunConfig& cfg, const std::string& command) {
  const fs::path out(f.output);
  prepare_output(out, f.force);
  json j = cfg.to_json();
  j["command"] = command;
  write_json(out / "config.json", j);
  return out;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const fs::path dir = begin_run(f, cfg, "synth");
  const Dataset ds = build_dataset(cfg.dataset);
  write_dataset(dir, ds);
  out << "wrote " << ds.train.size() + ds.valid.size() + ds.test.size() << " clips ("
      << to_string(cfg.dataset.contamination) << ") to " << dir.string() << "\n";
  return kOk;
}

int cmd_train_classifier(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(f.data);
  const fs::path dir = begin_run(f, cfg, "train-classifier");
  const MelFilterbank fb;
  const LabeledFeatures train = featurize(ds.train, fb);
  JsonLines log(dir / "train_log.jsonl");
  const Classifier clf = train_classifier(train, cfg.classifier, cfg.arch, [&](const ClassifierTrainLog& l) {
    log.write({{"epoch", l.epoch}, {"mean_loss", l.mean_loss}, {"train_accuracy", l.train_accuracy}});
    out << "epoch " << l.epoch << " loss " << l.mean_loss << " train_acc " << l.train_accuracy << "\n";
  });
  clf.save(dir / "classifier.lmt1");
  json summary{{"parameters", clf.parameter_count()}};
  if (ds.valid.size() > 0) summary["valid_accuracy"] = accuracy(clf, featurize(ds.valid, fb));
  if (ds.test.size() > 0) summary["test_accuracy"] = accuracy(clf, featurize(ds.test, fb));
  write_json(dir / "summary.json", summary);
  out << "test accuracy " << summary.value("test_accuracy", 0.0) << "\n";
  return kOk;
}

int train_decoder(const Flags& f, std::ostream& out, bool finetune) {
  const RunConfig cfg = resolve_config(f);
  const Classifier clf = load_classifier(f.classifier);
  const std::optional<Decoder> init = load_decoder(f.decoder, finetune);
  const Dataset ds = load_dataset(f.data);
  const std::string command = finetune ? "finetune" : "train-interpreter";
  const fs::path dir = begin_run(f, cfg, command);
  const MelFilterbank fb;
  const InterpreterData data = prepare_interpreter_data(clf, fb, ds.train.clips);
  JsonLines log(dir / (finetune ? "finetune_log.jsonl" : "interpreter_log.jsonl"));
  const auto on_epoch = [&](const InterpreterEpochLog& l) {
    log.write(l.to_json());
    out << "epoch " << l.epoch << " loss " << l.mean_loss << " mask_mean " << l.mask_mean
        << (finetune ? " gated " + std::to_string(l.gated_fraction) : std::string()) << "\n";
  };
  const Decoder dec =
      finetune ? finetune_interpreter(clf, *init, fb, data, cfg.finetune, on_epoch)
               : train_interpreter(clf, Decoder(DecoderArch::for_classifier(clf.arch()), cfg.seed), fb, data,
                                   cfg.interpreter, on_epoch);
  dec.save(dir / "decoder.lmt1");
  return kOk;
}

int cmd_interpret(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const Classifier clf = load_classifier(f.classifier);
  const Decoder dec = *load_decoder(f.decoder, true);
  require_file(f.input, "input WAV");
  const AudioClip clip = wav_read(*f.input);
  const fs::path dir = begin_run(f, cfg, "interpret");
  const MelFilterbank fb;
  const Spectrogram spec = stft(clip);
  NoGradGuard guard;
  const auto cls = clf.forward(fb.log_mel(spec.magnitude));
  Tensor mask = select(dec.forward(cls.latents, spec.frames()), 0);
  if (cfg.hard_threshold >= 0.0) {
    std::vector<float> v(mask.data().begin(), mask.data().end());
    for (auto& x : v) x = x > cfg.hard_threshold ? 1.0f : 0.0f;
    mask = Tensor(mask.shape(), std::move(v));
  }
  AudioClip listen = synthesize_interpretation(mask, spec);
  for (auto& s : listen.samples) s = std::clamp(s, -1.0f, 1.0f);
  wav_write(dir / "interpretation.wav", listen);
  save_tensors(dir / "mask.lmt1", {{"mask", mask}});
  write_png(dir / "mask.png", mask);
  double mm = 0.0;
  for (float v : mask.data()) mm += v;
  mm /= static_cast<double>(mask.numel());
  const int c = cls.predicted[0];
  const json pred{{"class", c},
                  {"class_name", std::string(synth_kind_name(synth_classes()[static_cast<std::size_t>(c)].kind))},
                  {"probability", cls.probs[0][static_cast<std::size_t>(c)]},
                  {"mask_mean", mm}};
  write_json(dir / "prediction.json", pred);
  out << pred.dump() << "\n";
  return kOk;
}

std::vector<AudioClip> eval_clips(const Dataset& ds, const std::string& split, std::uint64_t seed) {
  if (split == "test") return ds.test.clips;
  if (split == "ood") {
    Rng rng(child_seed(seed, 0x00D));
    return make_ood_mixtures(ds.test, rng).clips;
  }
  throw ConfigError("unknown split '" + split + "' (expected test or ood)");
}

MethodContext method_context(const RunConfig& cfg, const Classifier& clf, const Decoder* dec,
                             const MelFilterbank& fb) {
  return MethodContext{&clf, dec, &fb, cfg.baselines, cfg.domain, cfg.seed, cfg.hard_threshold};
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const Classifier clf = load_classifier(f.classifier);
  const auto dec = load_decoder(f.decoder, uses_decoder(cfg.methods));
  const Dataset ds = load_dataset(f.data);
  const auto clips = eval_clips(ds, f.split, cfg.seed);
  const fs::path dir = begin_run(f, cfg, "evaluate");
  const MelFilterbank fb;
  const auto items = prepare_eval_items(clf, fb, clips);
  const MethodContext ctx = method_context(cfg, clf, dec ? &*dec : nullptr, fb);
  json results = json::array();
  std::string csv = MetricsReport::csv_header() + "\n";
  const std::string domain(to_string(cfg.domain));
  for (const auto& name : cfg.methods) {
    const AttributionMethod method = make_method(name, ctx);
    const MetricsReport r = evaluate(clf, fb, items, method, cfg.domain);
    json row = r.to_json();
    row["method"] = name;
    if (name.rfind("lmac", 0) == 0) {
      std::vector<Tensor> masks;
      for (const auto& a : method(items)) masks.push_back(masking_map(a, MaskingDomain::stft, fb));
      row["ce_in_below_out"] = masked_in_preferred_fraction(clf, fb, items, masks);
    }
    results.push_back(row);
    csv += r.csv_row(name, domain) + "\n";
    out << r.csv_row(name, domain) << "\n";
  }
  write_json(dir / "metrics.json", {{"split", f.split}, {"domain", domain}, {"results", results}});
  write_text(dir / "metrics.csv", csv);
  return kOk;
}

int cmd_roar(const Flags& f, std::ostream& out) {
  Flags g = f;
  if (!g.methods) g.methods = "lmac,random";
  const RunConfig cfg = resolve_config(g);
  const Classifier clf = load_classifier(f.classifier);
  const auto dec = load_decoder(f.decoder, uses_decoder(cfg.methods));
  const Dataset ds = load_dataset(f.data);
  const fs::path dir = begin_run(f, cfg, "roar");
  const MelFilterbank fb;
  const int have = static_cast<int>(ds.train.size()) / kNumClasses;
  const int per_class = cfg.roar_train_per_class > 0 ? std::min(cfg.roar_train_per_class, have)
                                                     : std::max(1, have / 3);
  const DatasetSplit train = take_per_class(ds.train, per_class);
  const auto train_items = prepare_eval_items(clf, fb, train.clips);
  const auto test_items = prepare_eval_items(clf, fb, ds.test.clips);
  RoarConfig rc = cfg.roar;
  rc.train = cfg.classifier;
  const MethodContext ctx = method_context(cfg, clf, dec ? &*dec : nullptr, fb);

  LinePlot plot{"ROAR", "removed bins (%)", "test accuracy", {}};
  std::vector<double> baseline;
  json all = json::array();
  for (const auto& name : cfg.methods) {
    const AttributionMethod method = make_method(name, ctx);
    const RoarSet tr = make_roar_set(train_items, train.labels(), method, fb);
    const RoarSet te = make_roar_set(test_items, ds.test.labels(), method, fb);
    const RoarCurve curve = roar(tr, te, fb, rc, name, baseline.empty() ? nullptr : &baseline,
                                 [&](double p, std::uint64_t s, double acc) {
                                   out << name << " p=" << p << " seed=" << s << " acc=" << acc << "\n";
                                 });
    if (baseline.empty() && !curve.percents.empty() && curve.percents.front() == 0.0) {
      baseline = curve.per_seed.front();
    }
    write_json(dir / ("roar_" + name + ".json"), curve.to_json());
    all.push_back(curve.to_json());
    plot.series.push_back({name, curve.percents, curve.accuracy});
  }
  write_json(dir / "roar.json", all);
  write_svg(dir / "roar.svg", plot);
  return kOk;
}

int cmd_randomize(const Flags& f, std::ostream& out) {
  Flags g = f;
  const RunConfig base = resolve_config(f);
  if (!g.methods) g.methods = base.randomize_method;
  const RunConfig cfg = resolve_config(g);
  const Classifier clf = load_classifier(f.classifier);
  const auto dec = load_decoder(f.decoder, uses_decoder(cfg.methods));
  const Dataset ds = load_dataset(f.data);
  const fs::path dir = begin_run(f, cfg, "randomize");
  const MelFilterbank fb;
  const int per_class = std::max(1, (cfg.randomize_items + kNumClasses - 1) / kNumClasses);
  DatasetSplit subset = take_per_class(ds.test, std::min<int>(per_class, static_cast<int>(ds.test.size()) / kNumClasses));
  if (subset.clips.size() > static_cast<std::size_t>(cfg.randomize_items)) {
    subset.clips.resize(static_cast<std::size_t>(cfg.randomize_items));
  }
  const auto items = prepare_eval_items(clf, fb, subset.clips);

  LinePlot plot{"Cascading randomization", "randomized groups k", "SSIM to original", {}};
  json all = json::array();
  for (const auto& name : cfg.methods) {
    const InterpretFn interpret = [&](const Classifier& c) {
      const AttributionMethod method = make_method(name, method_context(cfg, c, dec ? &*dec : nullptr, fb));
      std::vector<Tensor> maps;
      for (const auto& a : method(items)) maps.push_back(masking_map(a, MaskingDomain::stft, fb));
      return maps;
    };
    const RandomizationTrace trace = cascading_randomization(clf, interpret, cfg.seed, name);
    write_json(dir / ("randomize_" + name + ".json"), trace.to_json());
    for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
      write_png(dir / ("randomize_" + name + "_k" + std::to_string(trace.k_blocks[k]) + ".png"),
                max_normalize_abs(trace.snapshots[k]));
    }
    all.push_back(trace.to_json());
    std::vector<double> ks(trace.k_blocks.begin(), trace.k_blocks.end());
    plot.series.push_back({name, ks, trace.ssim_to_original});
    out << name << " ssim";
    for (double s : trace.ssim_to_original) out << " " << s;
    out << "\n";
  }
  write_json(dir / "randomize.json", all);
  write_svg(dir / "randomize.svg", plot);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"L-MAC: listenable maps for audio classifiers"};
  app.require_subcommand(1);
  Flags f;

  const auto common = [&f](CLI::App* sub, bool needs_output = true) {
    sub->add_option("--config", f.config, "JSON config file (flags override it)");
    sub->add_option("--seed", f.seed, "Master seed");
    auto* o = sub->add_option("--output,-o", f.output, "Output directory");
    if (needs_output) o->required();
    sub->add_flag("--force", f.force, "Allow writing into a non-empty output directory");
  };
  const auto eval_flags = [&f](CLI::App* sub) {
    sub->add_option("--data", f.data, "Dataset directory written by synth")->required();
    sub->add_option("--classifier", f.classifier, "Classifier checkpoint")->required();
    sub->add_option("--decoder", f.decoder, "Decoder checkpoint");
    sub->add_option("--methods", f.methods, "Comma-separated attribution methods");
    sub->add_option("--domain", f.domain, "Masking domain")->check(CLI::IsMember({"stft", "mel"}));
    sub->add_option("--hard-threshold", f.hard_threshold, "Binarize L-MAC masks at this value");
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  common(synth);
  synth->add_option("--contamination", f.contamination, "none, white or mixture")
      ->check(CLI::IsMember({"none", "white", "mixture"}));
  synth->add_option("--snr", f.snr, "Contamination SNR in dB");

  auto* train_clf = app.add_subcommand("train-classifier", "Train the audio classifier");
  common(train_clf);
  train_clf->add_option("--data", f.data, "Dataset directory")->required();

  auto* train_int = app.add_subcommand("train-interpreter", "Stage-1 decoder training");
  common(train_int);
  train_int->add_option("--data", f.data, "Dataset directory")->required();
  train_int->add_option("--classifier", f.classifier, "Classifier checkpoint")->required();

  auto* finetune = app.add_subcommand("finetune", "Guided fine-tuning of a trained decoder");
  common(finetune);
  finetune->add_option("--data", f.data, "Dataset directory")->required();
  finetune->add_option("--classifier", f.classifier, "Classifier checkpoint")->required();
  finetune->add_option("--decoder", f.decoder, "Stage-1 decoder checkpoint");
  finetune->add_option("--lambda-g", f.lambda_g, "Guidance weight");
  finetune->add_option("--cct", f.cct, "Gate threshold in [0, 1]");

  auto* interpret = app.add_subcommand("interpret", "Listenable interpretation of one WAV file");
  common(interpret);
  interpret->add_option("--classifier", f.classifier, "Classifier checkpoint")->required();
  interpret->add_option("--decoder", f.decoder, "Decoder checkpoint");
  interpret->add_option("--input,-i", f.input, "Input WAV (16-bit mono 16 kHz)")->required();
  interpret->add_option("--hard-threshold", f.hard_threshold, "Binarize the mask at this value");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Faithfulness metrics per method");
  common(evaluate_cmd);
  eval_flags(evaluate_cmd);
  evaluate_cmd->add_option("--split", f.split, "test or ood")->check(CLI::IsMember({"test", "ood"}));

  auto* roar_cmd = app.add_subcommand("roar", "Remove-and-retrain curves");
  common(roar_cmd);
  eval_flags(roar_cmd);

  auto* randomize = app.add_subcommand("randomize", "Cascading parameter randomization");
  common(randomize);
  eval_flags(randomize);

  std::vector<const char*> argv{"lmac"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(f, out);
    if (train_clf->parsed()) return cmd_train_classifier(f, out);
    if (train_int->parsed()) return train_decoder(f, out, false);
    if (finetune->parsed()) return train_decoder(f, out, true);
    if (interpret->parsed()) return cmd_interpret(f, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(f, out);
    if (roar_cmd->parsed()) return cmd_roar(f, out);
    if (randomize->parsed()) return cmd_randomize(f, out);
  } catch (const MissingPrerequisite& e) {
    err << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace lmac::cli
