#include "tldr/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "tldr/analyze.hpp"
#include "tldr/error.hpp"
#include "tldr/gradcheck.hpp"
#include "tldr/image_io.hpp"
#include "tldr/stylize.hpp"
#include "tldr/synthdata.hpp"

#ifndef TLDR_VERSION
#define TLDR_VERSION "0.0.0"
#endif
#ifndef TLDR_GIT_DESCRIBE
#define TLDR_GIT_DESCRIBE "unknown"
#endif

namespace tldr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

void apply_toggle(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("toggle '" + assignment + "' is not name=bool");
  std::string name = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (name.rfind("use_", 0) == 0) name = name.substr(4);
  if (name.rfind("L_", 0) == 0 || name.rfind("l_", 0) == 0) name = name.substr(2);
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  bool flag = false;
  if (value == "true" || value == "1" || value == "on") flag = true;
  else if (value == "false" || value == "0" || value == "off") flag = false;
  else throw ConfigError("toggle '" + assignment + "': value must be true or false");
  if (name == "orig") config.use_orig = flag;
  else if (name == "styl") config.use_styl = flag;
  else if (name == "tr") config.use_tr = flag;
  else if (name == "tg") config.use_tg = flag;
  else if (name == "rsm") config.use_rsm = flag;
  else if (name == "ldf") config.use_ldf = flag;
  else if (name == "teo") config.use_teo = flag;
  else throw ConfigError("unknown toggle '" + name + "'");
}

std::vector<AblationRow> ablation_preset(int table) {
  auto set = [](bool orig, bool styl, bool tr, bool tg) {
    return [=](TrainConfig& c) {
      c.use_orig = orig;
      c.use_styl = styl;
      c.use_tr = tr;
      c.use_tg = tg;
    };
  };
  switch (table) {
    case 4:
      return {{"L_orig", set(true, false, false, false)},
              {"L_styl", set(false, true, false, false)},
              {"L_orig+L_styl", set(true, true, false, false)},
              {"L_orig+L_styl+L_TR", set(true, true, true, false)},
              {"L_orig+L_styl+L_TG", set(true, true, false, true)},
              {"full", set(true, true, true, true)}};
    case 5: {
      auto teo = [set](bool tr, bool tg, bool on) {
        return [=](TrainConfig& c) {
          set(true, true, tr, tg)(c);
          c.use_teo = on;
        };
      };
      return {{"L_TR w/o TEO", teo(true, false, false)}, {"L_TR w/ TEO", teo(true, false, true)},
              {"L_TG w/o TEO", teo(false, true, false)}, {"L_TG w/ TEO", teo(false, true, true)},
              {"both w/o TEO", teo(true, true, false)},  {"both w/ TEO", teo(true, true, true)}};
    }
    case 6:
      return {{"w/o RSM", [](TrainConfig& c) { c.use_rsm = false; }},
              {"w/ RSM tau=0.01", [](TrainConfig& c) { c.use_rsm = true; c.tau = 0.01; }},
              {"w/ RSM tau=0.1", [](TrainConfig& c) { c.use_rsm = true; c.tau = 0.1; }},
              {"w/o LDF", [](TrainConfig& c) { c.use_ldf = false; }},
              {"w/ LDF", [](TrainConfig& c) { c.use_ldf = true; }}};
    default:
      throw ConfigError("no ablation preset for table " + std::to_string(table) + " (use 4, 5 or 6)");
  }
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Written before a command does its work and rewritten when it finishes.
class RunManifest {
 public:
  RunManifest(fs::path dir, std::string command, const json& config)
      : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    doc_ = {{"tool", "tldr"},
            {"version", TLDR_VERSION},
            {"git_describe", TLDR_GIT_DESCRIBE},
            {"command", std::move(command)},
            {"config", config},
            {"config_hash", config_hash(config)},
            {"seeds", json::object()},
            {"outputs", json::array()},
            {"started_at", utc_now()},
            {"status", "running"}};
    if (config.contains("seed")) doc_["seeds"]["seed"] = config["seed"];
    if (config.contains("data_seed")) doc_["seeds"]["data_seed"] = config["data_seed"];
    save();
  }

  void output(const fs::path& p) { doc_["outputs"].push_back(p.lexically_relative(dir_).string()); }

  void finish() {
    doc_["status"] = "complete";
    doc_["finished_at"] = utc_now();
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    save();
  }

 private:
  void save() const { write_text(dir_ / "manifest.json", doc_.dump(2) + "\n"); }

  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad domain index '" + item + "' in '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty domain list");
  return out;
}

struct TrainOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::string domains;
  std::vector<std::string> toggles;
};

TrainConfig resolve_config(const TrainOverrides& o) {
  TrainConfig c;
  if (!o.config_path.empty()) c = train_config_from_json(read_json(o.config_path));
  if (o.seed) {
    c.seed = *o.seed;
    c.data_seed = *o.seed;
  }
  if (o.iters) {
    c.t_total = *o.iters;
    if (c.t_warm >= c.t_total) c.t_warm = c.t_total / 10;
    if (c.stop_at > c.t_total) c.stop_at = 0;
  }
  if (!o.domains.empty()) c.source_domains = parse_index_list(o.domains);
  for (const std::string& t : o.toggles) apply_toggle(c, t);
  c.validate();
  return c;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

std::string index_name(const char* prefix, std::size_t i, const char* ext) {
  std::ostringstream s;
  s << prefix << std::setw(4) << std::setfill('0') << i << ext;
  return s.str();
}

void write_evaluations(const fs::path& dir, const std::vector<Evaluation>& evals, RunManifest& m) {
  for (const Evaluation& e : evals) {
    const fs::path p = dir / ("confusion_" + sanitize(e.domain) + ".csv");
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    write_confusion_csv(f, e);
    m.output(p);
  }
  const fs::path p = dir / "class_report.csv";
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  bool header = true;
  for (const Evaluation& e : evals) {
    std::ostringstream s;
    write_class_report(s, e);
    std::string text = s.str();
    if (!header) text = text.substr(text.find('\n') + 1);
    header = false;
    f << text;
  }
  m.output(p);
}

int cmd_generate(std::uint64_t seed, const fs::path& out, std::size_t targets, std::size_t count,
                 std::size_t styles, std::size_t size, std::ostream& log) {
  ensure_dir(out);
  const json settings = {{"seed", seed}, {"num_targets", targets}, {"count", count},
                         {"styles", styles}, {"size", size}};
  RunManifest manifest(out, "generate-data", settings);
  DomainPairOptions opts;
  opts.num_targets = targets;
  opts.height = size;
  opts.width = size;
  auto [source, shifted] = make_domain_pair(seed, opts);
  std::vector<DomainSpec> domains{source};
  domains.insert(domains.end(), shifted.begin(), shifted.end());
  json specs = json::array();
  for (const DomainSpec& d : domains) {
    specs.push_back(to_json(d));
    const fs::path dir = out / sanitize(d.name);
    ensure_dir(dir);
    for (std::size_t i = 0; i < count; ++i) {
      const SegSample s = generate_sample(d, i);
      write_ppm(dir / index_name("image_", i, ".ppm"), s.image);
      write_pgm(dir / index_name("label_", i, ".pgm"), s.label, d.height, d.width);
    }
    manifest.output(dir);
  }
  write_text(out / "domains.json", specs.dump(2) + "\n");
  manifest.output(out / "domains.json");
  if (styles > 0) {
    const fs::path dir = out / "styles";
    ensure_dir(dir);
    const auto pool = generate_style_pool(seed, styles, size, size);
    for (std::size_t i = 0; i < pool.size(); ++i) write_ppm(dir / index_name("style_", i, ".ppm"), pool[i].image);
    manifest.output(dir);
  }
  manifest.finish();
  log << "wrote " << domains.size() << " domains x " << count << " samples to " << out.string() << '\n';
  return kExitOk;
}

int cmd_stylize(const fs::path& content, const fs::path& style, const fs::path& output,
                double epsilon, bool clamp, std::ostream& log) {
  const Tensor c = read_ppm(content);
  const Tensor s = read_ppm(style);
  const Tensor out = wct_transfer(c, extract_stats(s), epsilon, clamp);
  if (output.has_parent_path()) ensure_dir(output.parent_path());
  write_ppm(output, out);
  log << "wrote " << output.string() << '\n';
  return kExitOk;
}

void log_summary(const TrainResult& r, std::ostream& log) {
  double mean = 0.0;
  for (const Evaluation& e : r.final_evaluations) {
    log << "  " << e.domain << " mIoU " << std::fixed << std::setprecision(4) << e.iou.mean << '\n';
    mean += e.iou.mean;
  }
  if (!r.final_evaluations.empty()) {
    log << "  held-out mean mIoU " << mean / static_cast<double>(r.final_evaluations.size()) << '\n';
  }
  log.unsetf(std::ios::floatfield);
}

int cmd_train(const TrainOverrides& o, const fs::path& out, std::ostream& log) {
  const TrainConfig config = resolve_config(o);
  ensure_dir(out);
  RunManifest manifest(out, "train", to_json(config));
  write_text(out / "config.json", to_json(config).dump(2) + "\n");
  manifest.output(out / "config.json");
  const TrainResult r = run_training(config, out);
  for (const char* f : {"losses.csv", "metrics.csv", "checkpoint.tldr"}) manifest.output(out / f);
  write_evaluations(out, r.final_evaluations, manifest);
  manifest.finish();
  log << "trained " << r.state.iteration << " iterations -> " << out.string() << '\n';
  log_summary(r, log);
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& out, std::size_t samples,
             const std::string& domains, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.metadata.contains("train_config")) {
    throw ConfigError(checkpoint.string() + ": checkpoint carries no training config");
  }
  const TrainConfig config = train_config_from_json(ck.metadata["train_config"]);
  const DomainFamily family = make_domain_family(config);
  std::vector<std::size_t> which;
  if (domains.empty()) {
    for (std::size_t d = 0; d < family.domains.size(); ++d) which.push_back(d);
  } else {
    which = parse_index_list(domains);
  }
  ensure_dir(out);
  json settings = {{"checkpoint", fs::absolute(checkpoint).string()}, {"samples", samples},
                   {"seed", config.seed}, {"data_seed", config.data_seed}};
  RunManifest manifest(out, "eval", settings);
  std::vector<MetricRow> rows;
  std::vector<Evaluation> evals;
  for (std::size_t d : which) {
    if (d >= family.domains.size()) throw ConfigError("domain index " + std::to_string(d) + " out of range");
    const bool is_source = std::find(family.sources.begin(), family.sources.end(), d) != family.sources.end();
    Evaluation e = evaluate(ck.task_encoder, ck.decoder, family.domains[d], samples);
    rows.push_back({ck.iteration, e.domain, is_source ? "source" : "target", e.iou.mean});
    log << e.domain << (is_source ? " (source)" : " (target)") << " mIoU " << e.iou.mean << '\n';
    evals.push_back(std::move(e));
  }
  {
    std::ofstream f(out / "metrics.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / "metrics.csv").string());
    write_metrics_csv(f, rows);
  }
  manifest.output(out / "metrics.csv");
  write_evaluations(out, evals, manifest);
  manifest.finish();
  return kExitOk;
}

int cmd_analyze_dims(const fs::path& checkpoint, const fs::path& out, std::size_t pairs,
                     std::uint64_t seed, std::size_t max_coords, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.metadata.contains("train_config")) {
    throw ConfigError(checkpoint.string() + ": checkpoint carries no training config");
  }
  TrainConfig config = train_config_from_json(ck.metadata["train_config"]);
  if (config.style_pool_size < 2) config.style_pool_size = 2;
  const DomainFamily family = make_domain_family(config);
  const PairSet set = build_pair_set(family.domains.front(), make_style_pool(config), pairs, seed);
  const auto dims = dimensionality(ck.task_encoder, set, max_coords, seed);
  ensure_dir(out);
  RunManifest manifest(out, "analyze-dims",
                       {{"checkpoint", fs::absolute(checkpoint).string()}, {"pairs", pairs},
                        {"seed", seed}, {"max_coordinates", max_coords}});
  std::ostringstream csv;
  csv << "layer,texture_score,shape_score,baseline_score,texture_percent,shape_percent,residual_percent\n";
  csv.precision(10);
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto& d = dims[l];
    csv << l + 1 << ',' << d.texture_score << ',' << d.shape_score << ',' << d.baseline_score << ','
        << d.texture_percent << ',' << d.shape_percent << ',' << d.residual_percent << '\n';
    log << "layer " << l + 1 << ": texture " << d.texture_percent << "%, shape " << d.shape_percent
        << "%, residual " << d.residual_percent << "%\n";
  }
  write_text(out / "dims.csv", csv.str());
  manifest.output(out / "dims.csv");
  manifest.finish();
  return kExitOk;
}

int cmd_ablate(int table, const TrainOverrides& o, std::size_t seeds, const fs::path& out,
               std::ostream& log) {
  const TrainConfig base = resolve_config(o);
  const auto rows = ablation_preset(table);
  ensure_dir(out);
  json settings = to_json(base);
  settings["table"] = table;
  settings["seeds"] = seeds;
  RunManifest manifest(out, "ablate", settings);
  std::ostringstream csv;
  csv.precision(10);
  csv << "table,row,name,seed,use_orig,use_styl,use_tr,use_tg,use_rsm,use_ldf,use_teo,tau,domain,miou\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t s = 0; s < seeds; ++s) {
      TrainConfig c = base;
      c.seed = base.seed + s;
      rows[r].apply(c);
      c.validate();
      const fs::path dir = out / ("row" + std::to_string(r + 1) + "_seed" + std::to_string(c.seed));
      const TrainResult res = run_training(c, dir);
      double mean = 0.0;
      auto prefix = [&] {
        csv << table << ',' << r + 1 << ",\"" << rows[r].name << "\"," << c.seed << ',' << c.use_orig << ','
            << c.use_styl << ',' << c.use_tr << ',' << c.use_tg << ',' << c.use_rsm << ',' << c.use_ldf << ','
            << c.use_teo << ',' << c.tau << ',';
      };
      for (const Evaluation& e : res.final_evaluations) {
        prefix();
        csv << e.domain << ',' << e.iou.mean << '\n';
        mean += e.iou.mean;
      }
      mean /= static_cast<double>(res.final_evaluations.size());
      prefix();
      csv << "mean," << mean << '\n';
      log << "table " << table << " row " << r + 1 << " (" << rows[r].name << ") seed " << c.seed
          << ": held-out mIoU " << mean << '\n';
      manifest.output(dir);
    }
  }
  write_text(out / "ablation.csv", csv.str());
  manifest.output(out / "ablation.csv");
  manifest.finish();
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, std::size_t seeds, std::ostream& out) {
  const auto results = run_gradient_suite(seeds, seed);
  bool ok = true;
  out << std::left << std::setw(20) << "primitive" << "worst_rel_error  cases  status\n";
  for (const auto& r : results) {
    const bool pass = r.worst_relative_error < kGradCheckTolerance;
    ok = ok && pass;
    out << std::left << std::setw(20) << r.name << std::scientific << std::setprecision(3)
        << std::setw(17) << r.worst_relative_error << std::defaultfloat << std::setw(7) << r.cases
        << (pass ? "ok" : "FAIL") << '\n';
  }
  out << (ok ? "all primitives within " : "gradient check failed, tolerance ") << kGradCheckTolerance << '\n';
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Texture-learning domain randomization for semantic segmentation", "tldr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TLDR_VERSION) + " (" + TLDR_GIT_DESCRIBE + ")");

  std::uint64_t seed = 0;
  std::string out_dir;

  auto* gen = app.add_subcommand("generate-data", "Render source/target domains and a style pool");
  std::size_t gen_targets = 3, gen_count = 8, gen_styles = 8, gen_size = 64;
  gen->add_option("--seed", seed, "Domain family seed");
  gen->add_option("--out-dir", out_dir, "Output directory")->required();
  gen->add_option("--domains", gen_targets, "Number of shifted target domains");
  gen->add_option("--count", gen_count, "Samples per domain");
  gen->add_option("--styles", gen_styles, "Style images to render");
  gen->add_option("--size", gen_size, "Image height and width")->check(CLI::PositiveNumber);

  auto* sty = app.add_subcommand("stylize", "Whitening-colouring transfer of one PPM onto another");
  std::string content, style, output;
  double epsilon = kDefaultWctEpsilon;
  bool no_clamp = false;
  sty->add_option("--content", content, "Content image (PPM)")->required()->check(CLI::ExistingFile);
  sty->add_option("--style", style, "Style image (PPM)")->required()->check(CLI::ExistingFile);
  sty->add_option("--output", output, "Output image (PPM)")->required();
  sty->add_option("--epsilon", epsilon, "Eigenvalue regulariser");
  sty->add_flag("--no-clamp", no_clamp, "Keep values outside [0, 1]");

  TrainOverrides overrides;
  std::uint64_t seed_value = 0;
  std::size_t iters_value = 0;
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--config", overrides.config_path, "Training config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_value, "Seed for model, batches, styles and data");
    sub->add_option("--iters", iters_value, "Total iterations")->check(CLI::PositiveNumber);
    sub->add_option("--domains", overrides.domains, "Comma-separated source domain indices (0 = source)");
    sub->add_option("--toggle", overrides.toggles, "Loss toggle name=bool (orig, styl, tr, tg, rsm, ldf, teo)")
        ->check(CLI::Validator(
            [](std::string& value) {
              TrainConfig probe;
              try {
                apply_toggle(probe, value);
              } catch (const ConfigError& e) {
                return std::string(e.what());
              }
              return std::string();
            },
            "NAME=BOOL"));
    sub->add_option("--out-dir", out_dir, "Output directory")->required();
  };
  auto* train = app.add_subcommand("train", "Train a model");
  add_train_flags(train);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on its domain family");
  std::string checkpoint, eval_domains;
  std::size_t samples = 64;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--out-dir", out_dir, "Output directory")->required();
  ev->add_option("--samples", samples, "Samples per domain")->check(CLI::PositiveNumber);
  ev->add_option("--domains", eval_domains, "Comma-separated domain indices (default: all)");

  auto* dims = app.add_subcommand("analyze-dims", "Estimate per-layer texture/shape dimensionality");
  std::size_t pairs = 50, max_coords = 4096;
  dims->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dims->add_option("--out-dir", out_dir, "Output directory")->required();
  dims->add_option("--pairs", pairs, "Number of pair sets")->check(CLI::PositiveNumber);
  dims->add_option("--seed", seed, "Pair construction and subsampling seed");
  dims->add_option("--max-coords", max_coords, "Coordinates kept per layer")->check(CLI::PositiveNumber);

  auto* abl = app.add_subcommand("ablate", "Run an ablation preset");
  int table = 4;
  std::size_t ablate_seeds = 1;
  add_train_flags(abl);
  abl->add_option("--table", table, "Preset: 4 (losses), 5 (texture extraction), 6 (masking/decay)")
      ->required()
      ->check(CLI::IsMember({4, 5, 6}));
  abl->add_option("--seeds", ablate_seeds, "Seeds per row, counting up from --seed")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every differentiable primitive");
  std::size_t gc_seeds = 20;
  gc->add_option("--seed", seed, "First seed");
  gc->add_option("--seeds", gc_seeds, "Number of random draws per primitive")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  for (CLI::App* sub : {train, abl}) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) overrides.seed = seed_value;
    if (sub->count("--iters")) overrides.iters = iters_value;
  }

  try {
    if (gen->parsed()) return cmd_generate(seed, out_dir, gen_targets, gen_count, gen_styles, gen_size, out);
    if (sty->parsed()) return cmd_stylize(content, style, output, epsilon, !no_clamp, out);
    if (train->parsed()) return cmd_train(overrides, out_dir, out);
    if (ev->parsed()) return cmd_eval(checkpoint, out_dir, samples, eval_domains, out);
    if (dims->parsed()) return cmd_analyze_dims(checkpoint, out_dir, pairs, seed, max_coords, out);
    if (abl->parsed()) return cmd_ablate(table, overrides, ablate_seeds, out_dir, out);
    if (gc->parsed()) return cmd_grad_check(seed, gc_seeds, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

int cli_dispatch(int argc, const char* const* argv) {
  return cli_dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace tldr
