// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtp/cli/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtp/analytics/schedule.hpp"
#include "mtp/annotation/mtsd_io.hpp"
#include "mtp/engine/checkpoint.hpp"
#include "mtp/engine/config.hpp"
#include "mtp/engine/train.hpp"
#include "mtp/gradsuite.hpp"

namespace mtp::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : Error {
  using Error::Error;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// MTP_SEED, when set, replaces the command-line seed.
std::uint64_t effective_seed(std::uint64_t flag) {
  const char* env = std::getenv("MTP_SEED");
  if (!env || !*env) return flag;
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 20) {
    throw UsageError("MTP_SEED must be a non-negative integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError("MTP_SEED out of range: '" + s + "'");
  }
}

annotation::Stream parse_stream(const std::string& name) {
  for (std::size_t i = 0; i < annotation::kNumStreams; ++i) {
    if (name == annotation::stream_name(annotation::stream_from_index(i))) return annotation::stream_from_index(i);
  }
  throw UsageError("unknown stream '" + name + "' (expected sota, sior or fast)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string ops = "all";
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<const suite::Entry*> entries;
  if (a.ops == "all") {
    for (const auto& e : suite::registry()) entries.push_back(&e);
  } else {
    for (const std::string& name : split_list(a.ops)) {
      const suite::Entry* e = suite::find(name);
      if (!e) throw UsageError("unknown op '" + name + "'");
      entries.push_back(e);
    }
    if (entries.empty()) throw UsageError("--ops names no op");
  }
  if (a.seeds == 0) throw UsageError("--seeds must be positive");
  const std::uint64_t seed = effective_seed(a.seed);
  bool ok = true;
  for (const suite::Entry* e : entries) {
    const double err = suite::check(*e, seed, a.seeds);
    const bool pass = err <= a.tolerance;
    ok = ok && pass;
    out << e->name << " max_rel_error=" << fmt("%.3e", err) << ' ' << (pass ? "PASS" : "FAIL") << '\n';
  }
  out << (ok ? "all ops within " : "some ops exceed ") << fmt("%g", a.tolerance) << '\n';
  return ok ? kOk : kValidationFailure;
}

// -------------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::string stream = "sota";
  annotation::SynthSpec spec;
};

int run_synth(SynthArgs a, std::ostream& out) {
  a.spec.stream = parse_stream(a.stream);
  a.spec.seed = effective_seed(a.spec.seed);
  const annotation::Dataset ds = annotation::synth_dataset(a.spec);
  annotation::save_dataset(a.out, ds);
  std::size_t boxes = 0, dropped = 0;
  for (const auto& s : ds.samples) {
    boxes += s.rboxes.size();
    dropped += s.dropped;
  }
  out << "wrote " << ds.samples.size() << " samples (" << boxes << " boxes, " << dropped << " dropped) to " << a.out
      << '\n';
  return kOk;
}

// ----------------------------------------------------------------- labelgen
//
// Input: {"height": H, "width": W, "classes": K, "channels": C,
//         "boxes": [{"cx", "cy", "w", "h", "theta", "class"}, ...]}

struct LabelgenArgs {
  std::string boxes;
  std::string out;
};

int run_labelgen(const LabelgenArgs& a, std::ostream& out) {
  std::ifstream is(a.boxes);
  if (!is) throw UsageError("cannot open " + a.boxes);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("box file is not valid JSON: ") + e.what());
  }
  std::size_t h, w, classes, channels;
  std::vector<annotation::RotatedBox> boxes;
  try {
    h = j.at("height").get<std::size_t>();
    w = j.at("width").get<std::size_t>();
    classes = j.at("classes").get<std::size_t>();
    channels = j.value("channels", std::size_t{3});
    for (const auto& b : j.at("boxes")) {
      boxes.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("w").get<double>(),
                       b.at("h").get<double>(), b.value("theta", 0.0), b.at("class").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("box file: ") + e.what());
  }
  if (h == 0 || w == 0 || channels == 0 || classes == 0 || classes > annotation::kMaxClasses) {
    throw UsageError("box file: grid, channels and classes must be positive (classes <= 255)");
  }
  for (const auto& b : boxes) annotation::validate_box(b, classes);
  const annotation::MultiTaskSample s = annotation::build_sample(boxes, Tensor({channels, h, w}), annotation::Stream::kSota);
  out << "instances " << s.instances.size() << " dropped " << s.dropped << '\n';
  for (std::size_t i = 0; i < s.instances.size(); ++i) {
    const auto& inst = s.instances[i];
    out << "instance " << i << " class " << inst.class_id << " pixels " << inst.mask.count() << " hbox "
        << inst.hbox.x_min << ' ' << inst.hbox.y_min << ' ' << inst.hbox.x_max << ' ' << inst.hbox.y_max << '\n';
  }
  std::vector<std::size_t> counts(classes + 1, 0);
  for (auto v : s.semantic.labels) ++counts[v == annotation::kIgnoreLabel ? classes : v];
  for (std::size_t c = 0; c < classes; ++c) out << "semantic class " << c << " pixels " << counts[c] << '\n';
  out << "semantic ignore pixels " << counts[classes] << '\n';
  if (!a.out.empty()) {
    annotation::Dataset ds{h, w, channels, classes, annotation::Stream::kSota, {s}};
    annotation::save_dataset(a.out, ds);
    out << "wrote " << a.out << '\n';
  }
  return kOk;
}

// ----------------------------------------------------------------- pretrain

struct PretrainArgs {
  std::string config;
  std::string out;
  long long iters = -1;
};

int run_pretrain(const PretrainArgs& a, std::ostream& out, std::ostream& err) {
  engine::PretrainConfig pc = engine::load_pretrain_config(a.config);
  if (a.iters >= 0) {
    pc.train.optim.total_iters = static_cast<std::size_t>(a.iters);
    pc.train.optim.warmup_iters = std::min(pc.train.optim.warmup_iters, pc.train.optim.total_iters);
  }
  pc.train.seed = effective_seed(pc.train.seed);
  const engine::Datasets ds = engine::materialize_streams(pc);
  fs::create_directories(a.out);
  const std::string trace_path = (fs::path(a.out) / "trace.csv").string();
  std::ofstream trace(trace_path, std::ios::binary);
  if (!trace) throw UsageError("cannot write " + trace_path);
  engine::write_trace_header(trace);
  engine::TrainResult result;
  try {
    result = engine::train_mtp(ds, pc.train, [&](const engine::TraceRecord& r) { engine::write_trace_row(trace, r); });
  } catch (const TrainingError& e) {
    trace.flush();
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  const std::string ckpt_path = (fs::path(a.out) / "checkpoint.tnsr").string();
  engine::save_checkpoint(ckpt_path, result.params);
  out << "iterations " << result.trace.size() << '\n';
  if (!result.trace.empty()) {
    const auto& r = result.trace.back().report;
    for (std::size_t i = 0; i < r.streams.size(); ++i) {
      const auto& s = r.streams[i];
      out << annotation::stream_name(annotation::stream_from_index(i)) << " l_rod=" << engine::fmt_g17(s.rod)
          << " l_ins_b=" << engine::fmt_g17(s.ins_b) << " l_ins_m=" << engine::fmt_g17(s.ins_m)
          << " l_sem=" << engine::fmt_g17(s.sem) << '\n';
    }
    out << "total " << engine::fmt_g17(r.total) << '\n';
  }
  out << "trace " << trace_path << "\ncheckpoint " << ckpt_path << '\n';
  return kOk;
}

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
  std::string fixture;
  std::string out;
};

int run_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<analytics::FixtureEntry> entries;
  try {
    entries = analytics::load_fixture(a.fixture);
  } catch (const FixtureError& e) {
    throw UsageError(e.what());
  }
  const analytics::Reconciliation rec = analytics::reconcile_table(entries);
  const std::string csv = analytics::emit_report(entries, rec);
  out << csv;
  if (!a.out.empty()) {
    std::ofstream os(a.out, std::ios::binary);
    if (!os) throw UsageError("cannot write " + a.out);
    os << csv;
  }
  for (const auto& m : rec.mismatches) {
    err << "mismatch " << m.dataset << ' ' << m.cell << " expected " << m.expected << " derived " << m.derived
        << '\n';
  }
  err << rec.matched << '/' << rec.cells << " derived cells match\n";
  return rec.ok() ? kOk : kValidationFailure;
}

// ------------------------------------------------------------------ inspect

struct InspectArgs {
  std::string checkpoint;
  std::string dataset;
};

int run_inspect(const InspectArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.dataset.empty()) throw UsageError("inspect needs exactly one of --checkpoint, --dataset");
  if (!a.checkpoint.empty()) {
    std::ifstream is(a.checkpoint, std::ios::binary);
    if (!is) throw UsageError("cannot open " + a.checkpoint);
    const auto params = engine::read_checkpoint(is);
    std::size_t total = 0, backbone = 0;
    for (const auto& [k, v] : params) {
      out << k << ' ' << shape_str(v.shape()) << '\n';
      total += v.numel();
      if (!engine::is_head_key(k)) backbone += v.numel();
    }
    out << params.size() << " tensors, " << total << " values (" << backbone << " backbone)\n";
    return kOk;
  }
  const annotation::Dataset ds = annotation::load_dataset(a.dataset);
  out << "MTSD1 stream " << annotation::stream_name(ds.stream) << ", " << ds.samples.size() << " samples, "
      << ds.channels << "x" << ds.height << "x" << ds.width << ", " << ds.classes << " classes\n";
  std::size_t bad = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto problems = annotation::audit_sample(s, ds.classes);
    out << "sample " << i << ": " << s.instances.size() << " instances, " << s.dropped << " dropped";
    for (const auto& p : problems) out << "; " << p;
    out << '\n';
    bad += !problems.empty();
  }
  out << (bad ? std::to_string(bad) + " samples violate invariants" : std::string("all samples valid")) << '\n';
  return bad ? kValidationFailure : kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task pretraining toolkit: gradient checks, label synthesis, training and schedule analytics",
               "mtp"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GradcheckArgs g;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gc->add_option("--ops", g.ops, "Comma-separated op names, or 'all'")->capture_default_str();
  gc->add_option("--seed", g.seed, "First problem seed (MTP_SEED overrides)")->capture_default_str();
  gc->add_option("--seeds", g.seeds, "Number of consecutive seeds per op")->capture_default_str();
  gc->add_option("--tolerance", g.tolerance, "Largest accepted relative error")->capture_default_str();

  SynthArgs s;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic MTSD1 dataset");
  sy->add_option("--out", s.out, "Output .mtsd file")->required();
  sy->add_option("--stream", s.stream, "sota, sior or fast")->capture_default_str();
  sy->add_option("--count", s.spec.count, "Sample count")->capture_default_str();
  sy->add_option("--size", s.spec.size, "Square image side")->capture_default_str();
  sy->add_option("--channels", s.spec.channels, "Image channels")->capture_default_str();
  sy->add_option("--classes", s.spec.classes, "Class count")->capture_default_str();
  sy->add_option("--min-boxes", s.spec.min_boxes, "Fewest boxes per image")->capture_default_str();
  sy->add_option("--max-boxes", s.spec.max_boxes, "Most boxes per image")->capture_default_str();
  sy->add_option("--seed", s.spec.seed, "Dataset seed (MTP_SEED overrides)")->capture_default_str();

  LabelgenArgs l;
  auto* lg = app.add_subcommand("labelgen", "Derive masks, boxes and a semantic map from rotated boxes");
  lg->add_option("--boxes", l.boxes, "JSON file with grid and rotated boxes")->required();
  lg->add_option("--out", l.out, "Optional single-sample .mtsd output");

  PretrainArgs p;
  auto* pt = app.add_subcommand("pretrain", "Run multi-task pretraining");
  pt->add_option("--config", p.config, "JSON config")->required();
  pt->add_option("--out", p.out, "Output directory for trace.csv and checkpoint.tnsr")->required();
  pt->add_option("--iters", p.iters, "Override the configured iteration count");

  AnalyzeArgs an;
  auto* az = app.add_subcommand("analyze", "Recompute finetuning schedule quantities and reconcile a fixture");
  az->add_option("--fixture", an.fixture, "Schedule fixture JSON")->required();
  az->add_option("--out", an.out, "Also write the CSV report here");

  InspectArgs in;
  auto* ins = app.add_subcommand("inspect", "Summarize a checkpoint or audit a dataset");
  ins->add_option("--checkpoint", in.checkpoint, "TNSR1 checkpoint container");
  ins->add_option("--dataset", in.dataset, "MTSD1 dataset file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gc->parsed()) return run_gradcheck(g, out);
    if (sy->parsed()) return run_synth(s, out);
    if (lg->parsed()) return run_labelgen(l, out);
    if (pt->parsed()) return run_pretrain(p, out, err);
    if (az->parsed()) return run_analyze(an, out, err);
    if (ins->parsed()) return run_inspect(in, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const DegenerateSampleError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const Error& e) {
    // Unreadable or inconsistent inputs: labels, formats, checkpoints.
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  return kUsageError;
}

}  // namespace mtp::cli
