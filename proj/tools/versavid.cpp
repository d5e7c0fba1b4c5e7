// versavid: curation, reward scoring and toy GRPO runs from the command line.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "versavid/commands.hpp"

namespace cli = versavid::cli;

int main(int argc, char** argv) {
  CLI::App app{"VersaVid desk-scale recipe: curation, rewards and toy GRPO"};
  app.require_subcommand(1);

  cli::CurateDarkOptions dark;
  std::string dark_in, dark_out;
  auto* cd = app.add_subcommand("curate-dark", "Build masked-event samples from annotated timelines");
  cd->add_option("--input", dark_in, "timelines JSONL")->required()->check(CLI::ExistingFile);
  cd->add_option("--out", dark_out, "output directory")->required();
  cd->add_option("--seed", dark.seed, "base seed");
  cd->add_flag("--review-export", dark.review_export, "also write review.txt");

  cli::CurateMixOptions mix;
  std::string mix_clips, mix_qa, mix_out;
  auto* cm = app.add_subcommand("curate-mix", "Build interleaved two-clip samples");
  cm->add_option("--clips", mix_clips, "clip timelines JSONL")->required()->check(CLI::ExistingFile);
  cm->add_option("--qa", mix_qa, "QA records JSONL")->required()->check(CLI::ExistingFile);
  cm->add_option("--out", mix_out, "output directory")->required();
  cm->add_option("--seed", mix.seed, "base seed");
  cm->add_flag("--review-export", mix.review_export, "also write review.txt");

  cli::PrefilterOptions pf;
  std::string pf_in, pf_out, pf_stat = "variance";
  auto* pre = app.add_subcommand("prefilter", "Drop samples whose response groups carry no signal");
  pre->add_option("--responses", pf_in, "group JSONL")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pf_out, "output directory")->required();
  pre->add_option("--task", pf.task, "qa or caption")->check(CLI::IsMember({"qa", "caption"}));
  pre->add_option("--threshold", pf.threshold, "caption dispersion threshold");
  pre->add_option("--stat", pf_stat, "variance or std")->check(CLI::IsMember({"variance", "std"}));

  cli::ScoreOptions sc;
  std::string sc_resp, sc_truth, sc_out, sc_cfg, sc_judge_cfg;
  auto* score = app.add_subcommand("score", "Score responses into reward breakdowns");
  score->add_option("--responses", sc_resp, "responses JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--truth", sc_truth, "ground truth JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--out", sc_out, "output directory")->required();
  score->add_option("--config", sc_cfg, "reward config JSON")->check(CLI::ExistingFile);
  score->add_option("--judge", sc.judge, "mock or remote")->check(CLI::IsMember({"mock", "remote"}));
  score->add_option("--judge-config", sc_judge_cfg, "judge backend JSON")->check(CLI::ExistingFile);

  cli::TrainToyOptions tt;
  std::string tt_env, tt_cfg, tt_out;
  std::size_t tt_steps = 0;
  bool tt_sweep = false;
  auto* train = app.add_subcommand("train-toy", "Train a toy policy with GRPO");
  train->add_option("--env", tt_env, "environment JSON")->check(CLI::ExistingFile);
  train->add_option("--config", tt_cfg, "GRPO config JSON")->check(CLI::ExistingFile);
  train->add_option("--out", tt_out, "output directory")->required();
  train->add_option("--seed", tt.seed, "seed");
  train->add_option("--steps", tt_steps, "override step count");
  train->add_flag("--lambda-sweep", tt_sweep, "run KL weights 0, 0.05 and 0.10");

  std::string rp_run;
  auto* rep = app.add_subcommand("report", "Summarize a training run directory");
  rep->add_option("--run", rp_run, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cli::CommandResult result;
    if (*cd) {
      dark.input = dark_in;
      dark.out = dark_out;
      result = cli::curate_dark(dark);
    } else if (*cm) {
      mix.clips = mix_clips;
      mix.qa = mix_qa;
      mix.out = mix_out;
      result = cli::curate_mix(mix);
    } else if (*pre) {
      pf.responses = pf_in;
      pf.out = pf_out;
      pf.stat = pf_stat == "std" ? versavid::DispersionStat::StdDev : versavid::DispersionStat::Variance;
      result = cli::prefilter(pf);
    } else if (*score) {
      sc.responses = sc_resp;
      sc.truth = sc_truth;
      sc.out = sc_out;
      if (!sc_cfg.empty()) sc.reward_config = sc_cfg;
      if (!sc_judge_cfg.empty()) sc.judge_config = sc_judge_cfg;
      result = cli::score(sc);
    } else if (*train) {
      if (!tt_env.empty()) tt.env = tt_env;
      if (!tt_cfg.empty()) tt.grpo_config = tt_cfg;
      tt.out = tt_out;
      if (tt_steps > 0) tt.steps = tt_steps;
      if (tt_sweep) tt.lambda_sweep = {0.0, 0.05, 0.10};
      result = cli::train_toy(tt);
    } else if (*rep) {
      result = cli::report({rp_run});
      std::ifstream txt(result.summary["report"].get<std::string>());
      std::cout << txt.rdbuf();
      return result.exit_code;
    }
    std::cout << result.summary.dump(2) << '\n';
    return result.exit_code;
  } catch (const versavid::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
