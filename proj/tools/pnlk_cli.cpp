// pnlk: registration benchmarks, accelerator model reports and fixture tools.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pnlk/bench.hpp"
#include "pnlk/error.hpp"

namespace {

using namespace pnlk;
using namespace pnlk::bench;

struct CommonFlags {
  CommonOptions opts;
  std::string config, weights, format = "csv";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.opts.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--out-dir", f.opts.out_dir, "Directory for CSV/SVG output")->capture_default_str();
  cmd->add_option("--format", f.format, "csv, or svg for CSV plus a plot drawn from it")
      ->check(CLI::IsMember({"csv", "svg"}))
      ->capture_default_str();
  cmd->add_option("--config", f.config, "JSON overrides for LK/ICP/Q-format settings");
  cmd->add_option("--weights", f.weights, "Weight blob (default: seeded random network)");
  cmd->add_option("--weights-seed", f.opts.weights_seed, "Seed of the random network")->capture_default_str();
  cmd->add_option("--jobs", f.opts.jobs, "Worker threads for independent trials")->capture_default_str();
}

CommonOptions finish(CommonFlags& f) {
  CommonOptions o = f.opts;
  o.format = f.format == "svg" ? OutputFormat::svg : OutputFormat::csv;
  if (!f.config.empty()) o.config = f.config;
  if (!f.weights.empty()) o.weights = f.weights;
  return o;
}

std::vector<Method> methods_of(const std::vector<std::string>& names) {
  std::vector<Method> m;
  for (const auto& n : names) m.push_back(method_from_string(n));
  return m;
}

void add_pair_flags(CLI::App* cmd, PairSpec& p) {
  cmd->add_option("--angle", p.initial_angle_deg, "Initial rotation (degrees)")->capture_default_str();
  cmd->add_option("--translation", p.translation_bound, "Translation components drawn from U[0, bound)")
      ->capture_default_str();
  cmd->add_option("--points", p.num_points, "Points per cloud after resampling")->capture_default_str();
  cmd->add_flag("--shared-indices", p.shared_indices, "Resample template and source with the same indices");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PointNetLK / ICP registration toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  std::vector<std::string> method_names;

  // register
  RegisterOptions reg;
  std::string reg_source, reg_gt;
  auto* c_reg = app.add_subcommand("register", "Register one pair and print the run record");
  add_common(c_reg, flags["register"]);
  c_reg->add_option("--template", reg.templ, "Template cloud (.off or .csv)")->required();
  c_reg->add_option("--source", reg_source, "Source cloud; without it a pair is generated from the template");
  c_reg->add_option("--gt", reg_gt, "4x4 ground truth CSV for an explicit source");
  c_reg->add_option("--methods", method_names, "pointnetlk-float, pointnetlk-quant, icp");
  add_pair_flags(c_reg, reg.pair);

  // sweep-angle
  SweepOptions sweep;
  auto* c_sweep = app.add_subcommand("sweep-angle", "Mean error per method and initial angle over a corpus");
  add_common(c_sweep, flags["sweep-angle"]);
  c_sweep->add_option("--corpus", sweep.corpus, "Directory of .off meshes")->required();
  c_sweep->add_option("--angles", sweep.angles, "Initial angles (degrees)");
  c_sweep->add_option("--methods", method_names, "Methods to compare");
  c_sweep->add_option("--trials", sweep.trials, "Trials per model and angle")->capture_default_str();
  c_sweep->add_option("--points", sweep.num_points)->capture_default_str();
  c_sweep->add_option("--max-models", sweep.max_models, "Use only the first M models (0: all)");
  c_sweep->add_option("--translation", sweep.translation_bound)->capture_default_str();

  // scaling
  ScalingOptions scaling;
  bool scaling_mean = false;
  auto* c_scale = app.add_subcommand("scaling", "Wall time vs point count with log-log slope fits");
  add_common(c_scale, flags["scaling"]);
  c_scale->add_option("--sizes", scaling.sizes, "Point counts");
  c_scale->add_option("--methods", method_names);
  c_scale->add_option("--repetitions", scaling.repetitions)->capture_default_str();
  c_scale->add_option("--iterations", scaling.iterations, "Fixed iteration count per run")->capture_default_str();
  c_scale->add_option("--angle", scaling.angle_deg)->capture_default_str();
  c_scale->add_flag("--mean", scaling_mean, "Aggregate repetitions by mean instead of median");

  // profile
  ProfileOptions prof;
  std::string prof_template, prof_method = "pointnetlk-float";
  auto* c_prof = app.add_subcommand("profile", "Per-phase wall time breakdown of one registration");
  add_common(c_prof, flags["profile"]);
  c_prof->add_option("--template", prof_template, "Template cloud (default: random cloud)");
  c_prof->add_option("--method", prof_method)->capture_default_str();
  add_pair_flags(c_prof, prof.pair);

  // quant-eval
  QuantEvalOptions quant;
  auto* c_quant = app.add_subcommand("quant-eval", "Registration and feature error per fixed-point width");
  add_common(c_quant, flags["quant-eval"]);
  c_quant->add_option("--corpus", quant.corpus, "Directory of .off meshes")->required();
  c_quant->add_option("--formats", quant.formats, "Q-format n values (word = 2n bits)");
  c_quant->add_option("--angles", quant.angles);
  c_quant->add_option("--trials", quant.trials)->capture_default_str();
  c_quant->add_option("--points", quant.num_points)->capture_default_str();
  c_quant->add_option("--max-models", quant.max_models);
  c_quant->add_option("--translation", quant.translation_bound)->capture_default_str();

  // accel
  AccelOptions accel;
  std::string accel_profile;
  std::vector<int> accel_unroll;
  auto* c_accel = app.add_subcommand("accel", "Latency, pipeline and resource report of the IP core model");
  add_common(c_accel, flags["accel"]);
  c_accel->add_option("--profile", accel_profile, "Calibration profile JSON");
  c_accel->add_option("--points", accel.num_points)->capture_default_str();
  c_accel->add_option("--unroll", accel_unroll,
                      "8 unroll factors: FC(3,64) FC(64,64) FC(64,128) FC(128,1024) BN64 BN128 BN1024 Pool")
      ->expected(8);
  c_accel->add_option("--device", accel.device)->capture_default_str();
  c_accel->add_option("--budget", accel.budget, "Device name, none, or dsp=<count>")->capture_default_str();
  c_accel->add_option("--word-bits", accel.word_bits)->capture_default_str();
  c_accel->add_flag("--explore", accel.explore, "Rank every unroll assignment within the budget");
  c_accel->add_option("--top", accel.top, "Rows of the ranking to write (0: all)")->capture_default_str();

  // gen-pair
  GenPairOptions gpair;
  auto* c_gpair = app.add_subcommand("gen-pair", "Write template.csv, source.csv and gt.csv");
  add_common(c_gpair, flags["gen-pair"]);
  c_gpair->add_option("--template", gpair.templ)->required();
  add_pair_flags(c_gpair, gpair.pair);

  // weights-info
  std::string info_path;
  auto* c_info = app.add_subcommand("weights-info", "Validate a weight blob and print its header");
  c_info->add_option("path", info_path)->required();

  // gen-weights
  GenWeightsOptions gw;
  std::string gw_out;
  auto* c_gw = app.add_subcommand("gen-weights", "Write a seeded random weight blob");
  add_common(c_gw, flags["gen-weights"]);
  c_gw->add_option("--out", gw_out, "Output path (default: <out-dir>/weights.bin)");
  c_gw->add_option("--value-bits", gw.blob.value_bits)->check(CLI::IsMember({32, 64}))->capture_default_str();
  c_gw->add_option("--q-n", gw.blob.q_n, "Q-format declared in the blob (0: float)")->capture_default_str();

  // gen-fixtures
  GenFixturesOptions gf;
  auto* c_gf = app.add_subcommand("gen-fixtures", "Write fixture bundles (blob, clouds, expected outputs)");
  add_common(c_gf, flags["gen-fixtures"]);
  c_gf->add_option("--count", gf.count)->capture_default_str();
  c_gf->add_option("--points", gf.num_points)->capture_default_str();
  c_gf->add_option("--value-bits", gf.blob.value_bits)->check(CLI::IsMember({32, 64}))->capture_default_str();
  c_gf->add_option("--q-n", gf.blob.q_n)->capture_default_str();

  // gen-corpus
  GenCorpusOptions gc;
  auto* c_gc = app.add_subcommand("gen-corpus", "Write synthetic OFF meshes");
  add_common(c_gc, flags["gen-corpus"]);
  c_gc->add_option("--dir", gc.dir, "Output directory (default: --out-dir)");
  c_gc->add_option("--count", gc.count)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "weights-info") return cmd_weights_info(info_path, std::cout);
    const CommonOptions common = finish(flags[name]);

    if (name == "register") {
      if (!reg_source.empty()) reg.source = reg_source;
      if (!reg_gt.empty()) reg.gt = reg_gt;
      if (!method_names.empty()) reg.methods = methods_of(method_names);
      return cmd_register(common, reg, std::cout);
    }
    if (name == "sweep-angle") {
      if (!method_names.empty()) sweep.methods = methods_of(method_names);
      return cmd_sweep_angle(common, sweep, std::cout);
    }
    if (name == "scaling") {
      if (!method_names.empty()) scaling.methods = methods_of(method_names);
      scaling.use_mean = scaling_mean;
      return cmd_scaling(common, scaling, std::cout);
    }
    if (name == "profile") {
      if (!prof_template.empty()) prof.templ = prof_template;
      prof.method = method_from_string(prof_method);
      return cmd_profile(common, prof, std::cout);
    }
    if (name == "quant-eval") return cmd_quant_eval(common, quant, std::cout);
    if (name == "accel") {
      if (!accel_profile.empty()) accel.profile = accel_profile;
      if (!accel_unroll.empty()) std::copy(accel_unroll.begin(), accel_unroll.end(), accel.unroll.begin());
      return cmd_accel(common, accel, std::cout);
    }
    if (name == "gen-pair") return cmd_gen_pair(common, gpair, std::cout);
    if (name == "gen-weights") {
      gw.out = gw_out;
      return cmd_gen_weights(common, gw, std::cout);
    }
    if (name == "gen-fixtures") return cmd_gen_fixtures(common, gf, std::cout);
    if (name == "gen-corpus") return cmd_gen_corpus(common, gc, std::cout);
  } catch (const ParseError& e) {
    std::cerr << "pnlk: parse error: " << e.what() << '\n';
    return 3;
  } catch (const BlobError& e) {
    std::cerr << "pnlk: weight blob error: " << e.what() << '\n';
    return 4;
  } catch (const InvalidArgument& e) {
    std::cerr << "pnlk: invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pnlk: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
