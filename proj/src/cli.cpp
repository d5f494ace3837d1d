// SPDX-License-Identifier: Apache-2.0

#include "kernsym/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "kernsym/conv_arith.hpp"
#include "kernsym/consistency.hpp"
#include "kernsym/emergence.hpp"
#include "kernsym/report.hpp"
#include "kernsym/symmetry.hpp"

namespace kernsym {

namespace {

struct AnalyzeOptions {
  std::string weights, manifest, filter = "*", format = "csv", out;
};

struct ArithOptions {
  std::string manifest, input, format = "text";
  bool suggest = false, strict = false;
  std::size_t limit = 16;
};

struct ConsistencyOptions {
  std::string weights, manifest, images, mode = "flip", shift = "1,1", format = "text";
};

struct TrainOptions {
  std::string task = "blur", trace, save_weights;
  bool flip_aug = false;
  std::size_t steps = 2000, batch = 8, interval = 100, samples = 0;
  std::uint64_t seed = 0;
  double lr = -1.0;
};

template <typename T>
bool parse_number(std::string_view s, T& v) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

Extent2 parse_extent(const std::string& text) {
  const auto x = text.find_first_of("xX");
  Extent2 e;
  if (x == std::string::npos || !parse_number(std::string_view(text).substr(0, x), e.h) ||
      !parse_number(std::string_view(text).substr(x + 1), e.w) || e.h == 0 || e.w == 0) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("--input: expected HxW, got '{}'", text));
  }
  return e;
}

std::pair<int, int> parse_shift(const std::string& text) {
  const auto comma = text.find(',');
  int dy = 0, dx = 0;
  if (comma == std::string::npos || !parse_number(std::string_view(text).substr(0, comma), dy) ||
      !parse_number(std::string_view(text).substr(comma + 1), dx)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("--shift: expected DY,DX, got '{}'", text));
  }
  return {dy, dx};
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", path));
  f << text;
}

int run_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err) {
  const TensorStore store = load_safetensors(o.weights);
  const ModelManifest manifest = load_manifest(o.manifest);
  const SymmetryProfile profile = model_symmetry_profile(store, manifest, o.filter);
  if (profile.layers.empty()) {
    err << fmt::format("warning: no conv2d layer matches filter '{}'\n", o.filter);
  }
  for (const auto& l : profile.layers) {
    if (!l.score.defined) {
      err << fmt::format("warning: layer '{}' has an all-zero mean kernel; score undefined\n",
                         l.score.layer_name);
    }
  }
  GenerationInfo info;
  info.inputs = {digest_file(o.weights), digest_file(o.manifest)};
  if (o.format == "csv") {
    emit(profile_to_csv(profile), o.out, out);
  } else if (o.format == "json") {
    emit(profile_to_json(profile, info), o.out, out);
  } else if (!profile.layers.empty()) {
    emit(emit_svg_chart(profile), o.out, out);
  } else {
    emit("", o.out, out);
  }
  return exit_code::kOk;
}

int run_arith(const ArithOptions& o, std::ostream& out) {
  const ModelManifest manifest = load_manifest(o.manifest);
  const Extent2 input = o.input.empty() ? Extent2{manifest.input.h, manifest.input.w} : parse_extent(o.input);
  const LintReport report = propagate_and_lint(manifest, input);
  std::optional<Extent2> suggestion;
  if (o.suggest) suggestion = suggest_input_size(manifest, input, o.limit);

  if (o.format == "json") {
    GenerationInfo info;
    info.inputs = {digest_file(o.manifest)};
    out << lint_to_json(report, suggestion, o.suggest, info);
  } else {
    out << lint_to_text(report);
    if (o.suggest) {
      if (suggestion) {
        out << fmt::format("suggested input: {}x{}\n", suggestion->h, suggestion->w);
      } else {
        out << fmt::format("suggested input: none within +{}\n", o.limit);
      }
    }
  }
  return o.strict && report.flag_count() > 0 ? exit_code::kFlagged : exit_code::kOk;
}

int run_consistency(const ConsistencyOptions& o, std::ostream& out) {
  const TensorStore store = load_safetensors(o.weights);
  const ModelManifest manifest = load_manifest(o.manifest);
  const Network model = Network::from_manifest(manifest, store);
  const std::vector<NamedImage> named = load_image_set(o.images);
  std::vector<FeatureMap> images;
  std::vector<std::string> names;
  for (const auto& n : named) {
    images.push_back(n.image);
    names.push_back(n.name);
  }
  ConsistencyReport report;
  if (o.mode == "flip") {
    report = flip_consistency(model, images);
  } else {
    const auto [dy, dx] = parse_shift(o.shift);
    report = shift_consistency(model, images, dy, dx);
  }
  if (o.format == "json") {
    GenerationInfo info;
    info.inputs = {digest_file(o.weights), digest_file(o.manifest)};
    out << consistency_to_json(report, names, info);
  } else {
    out << consistency_to_text(report, names);
  }
  return exit_code::kOk;
}

void print_scores(std::ostream& out, const char* label, const std::vector<SymmetryScore>& scores) {
  for (const auto& s : scores) {
    if (s.defined) {
      out << fmt::format("{} {} S={:.6f}\n", label, s.layer_name, s.value);
    } else {
      out << fmt::format("{} {} S=undefined\n", label, s.layer_name);
    }
  }
}

int run_train_demo(const TrainOptions& o, std::ostream& out) {
  const bool blur = o.task == "blur";
  const ToyModel toy = blur ? blur_toy_model(derive_seed(o.seed, 1)) : edge_toy_model(derive_seed(o.seed, 1));
  const std::size_t samples = o.samples > 0 ? o.samples : (blur ? 64 : 256);
  const Dataset data = blur ? gen_blur_task(samples, derive_seed(o.seed, 2)) : gen_edge_task(samples, derive_seed(o.seed, 2));

  TrainConfig config;
  config.learning_rate = o.lr >= 0.0 ? o.lr : (blur ? 0.1 : 0.05);
  config.steps = o.steps;
  config.batch_size = o.batch;
  config.seed = derive_seed(o.seed, 3);
  config.flip_augment = o.flip_aug;
  config.loss = blur ? LossKind::kMse : LossKind::kCrossEntropy;
  config.trace_interval = o.interval;

  const TrainResult result = train(Network::from_manifest(toy.manifest, toy.store), data, config);
  out << fmt::format("task {} steps {} seed {} flip_aug {} lr {}\n", o.task, o.steps, o.seed,
                     o.flip_aug ? "on" : "off", config.learning_rate);
  print_scores(out, "initial", result.trace.samples.front().scores);
  print_scores(out, "final", result.trace.samples.back().scores);
  out << fmt::format("final loss {:.6g}\n", result.losses.back());
  if (!o.trace.empty()) emit(trace_to_csv(result.trace), o.trace, out);
  if (!o.save_weights.empty()) save_safetensors(o.save_weights, result.model.to_store());
  return exit_code::kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kTruncatedFile:
    case ErrorCode::kMalformedHeader:
    case ErrorCode::kBadOffsets:
    case ErrorCode::kUnsupportedDtype:
    case ErrorCode::kSchemaError:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidSpec:
      return exit_code::kParse;
    case ErrorCode::kEmptyImageSet:
      return exit_code::kEmptyImages;
    case ErrorCode::kDivergedLoss:
      return exit_code::kDiverged;
    default:
      return exit_code::kShape;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-kernel symmetry and padding analysis for convolutional networks", "kernsym"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  AnalyzeOptions analyze;
  auto* a = app.add_subcommand("analyze", "Per-layer symmetry profile of a weight file");
  a->add_option("--weights", analyze.weights, "safetensors weight file")->required();
  a->add_option("--manifest", analyze.manifest, "JSON model manifest")->required();
  a->add_option("--filter", analyze.filter, "glob on layer names");
  a->add_option("--format", analyze.format)->check(CLI::IsMember({"csv", "json", "svg"}));
  a->add_option("--out", analyze.out, "output file (default stdout)");

  ArithOptions arith;
  auto* r = app.add_subcommand("arith", "Padding consumption of every windowed layer");
  r->add_option("--manifest", arith.manifest)->required();
  r->add_option("--input", arith.input, "HxW (default: manifest input)");
  r->add_flag("--suggest", arith.suggest, "search for the smallest evenly padded input size");
  r->add_option("--limit", arith.limit, "search window for --suggest");
  r->add_flag("--strict", arith.strict, "exit 1 when any layer is flagged");
  r->add_option("--format", arith.format)->check(CLI::IsMember({"text", "json"}));

  ConsistencyOptions cons;
  auto* c = app.add_subcommand("consistency", "Flip or shift consistency of segmentation predictions");
  c->add_option("--weights", cons.weights)->required();
  c->add_option("--manifest", cons.manifest)->required();
  c->add_option("--images", cons.images, "directory of safetensors image files")->required();
  c->add_option("--mode", cons.mode)->check(CLI::IsMember({"flip", "shift"}));
  c->add_option("--shift", cons.shift, "DY,DX");
  c->add_option("--format", cons.format)->check(CLI::IsMember({"text", "json"}));

  TrainOptions train_opts;
  auto* t = app.add_subcommand("train-demo", "Train a toy model and trace kernel symmetry");
  t->add_option("--task", train_opts.task)->check(CLI::IsMember({"blur", "edge"}));
  t->add_flag("--flip-aug", train_opts.flip_aug, "random horizontal flips");
  t->add_option("--steps", train_opts.steps)->check(CLI::PositiveNumber);
  t->add_option("--seed", train_opts.seed);
  t->add_option("--lr", train_opts.lr);
  t->add_option("--batch", train_opts.batch)->check(CLI::PositiveNumber);
  t->add_option("--interval", train_opts.interval, "trace sampling interval")->check(CLI::PositiveNumber);
  t->add_option("--samples", train_opts.samples, "dataset size");
  t->add_option("--trace", train_opts.trace, "trace CSV path");
  t->add_option("--save-weights", train_opts.save_weights, "write trained weights as safetensors");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return exit_code::kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kParse;
  }

  try {
    if (a->parsed()) return run_analyze(analyze, out, err);
    if (r->parsed()) return run_arith(arith, out);
    if (c->parsed()) return run_consistency(cons, out);
    if (t->parsed()) return run_train_demo(train_opts, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kParse;
  }
  return exit_code::kParse;
}

}  // namespace kernsym
