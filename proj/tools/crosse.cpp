// Command-line front end: prep, train, eval, explain.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "crosse/commands.hpp"

int main(int argc, char** argv) {
    using namespace crosse;

    CLI::App app{"CrossE knowledge-graph embeddings: training, link prediction and path explanations"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    // prep
    PrepOptions prep;
    auto* prep_cmd = app.add_subcommand("prep", "Encode triple files into a dataset directory");
    prep_cmd->add_option("--train", prep.train, "Train triples (TSV)")->required();
    prep_cmd->add_option("--valid", prep.valid, "Validation triples (TSV)")->required();
    prep_cmd->add_option("--test", prep.test, "Test triples (TSV)")->required();
    prep_cmd->add_option("--out", prep.out, "Output dataset directory")->required();

    // train
    TrainCommand train_cmd;
    std::map<std::string, std::string> train_flags;
    auto* train_sub = app.add_subcommand("train", "Train a model");
    train_sub->add_option("--data", train_cmd.data, "Dataset directory from `prep`")->required();
    train_sub->add_option("--out,--checkpoint", train_cmd.out, "Checkpoint directory")->required();
    train_sub->add_option("--config", train_cmd.config, "key = value config file");
    train_sub->add_flag("--resume", train_cmd.resume, "Continue from the checkpoint in --out");
    const std::pair<const char*, const char*> train_keys[] = {
        {"--seed", "seed"},         {"--threads", "threads"}, {"--mode", "mode"},       {"--d", "d"},
        {"--n", "n"},               {"--lr", "lr"},           {"--lambda", "lambda"},   {"--batch", "batch"},
        {"--epochs", "epochs"},     {"--dropout", "dropout"}, {"--margin", "margin"},
        {"--checkpoint-every", "checkpoint_every"}};
    for (const auto& [flag, key] : train_keys)
        train_sub->add_option(flag, train_flags[key], std::string("Override config key ") + key);

    // eval
    EvalCommand eval_cmd;
    std::string eval_split = "test", eval_settings = "raw,filter", eval_mode;
    auto* eval_sub = app.add_subcommand("eval", "Link-prediction evaluation");
    eval_sub->add_option("--checkpoint", eval_cmd.checkpoint, "Checkpoint directory")->required();
    eval_sub->add_option("--data", eval_cmd.data, "Dataset directory from `prep`")->required();
    eval_sub->add_option("--split", eval_split, "train, valid or test");
    eval_sub->add_option("--settings", eval_settings, "raw, filter or raw,filter");
    eval_sub->add_option("--mode", eval_mode, "crosse, crosse_s or transe (default: checkpoint mode)");
    eval_sub->add_option("--threads", eval_cmd.threads, "Worker threads");
    eval_sub->add_option("--out", eval_cmd.out, "Report directory")->required();

    // explain
    ExplainCommand explain_cmd;
    std::string explain_split = "test", explain_mode, kr = "3", ke = "10";
    auto* explain_sub = app.add_subcommand("explain", "Search path explanations and their supports");
    explain_sub->add_option("--checkpoint", explain_cmd.checkpoint, "Checkpoint directory")->required();
    explain_sub->add_option("--data", explain_cmd.data, "Dataset directory from `prep`")->required();
    explain_sub->add_option("--split", explain_split, "train, valid or test");
    explain_sub->add_option("--kr", kr, "Similar relations: k, list (1,3) or range (1-5)");
    explain_sub->add_option("--ke", ke, "Similar entities: k, list or range");
    explain_sub->add_option("--mode", explain_mode, "crosse, crosse_s or transe (default: checkpoint mode)");
    explain_sub->add_option("--threads", explain_cmd.threads, "Worker threads");
    explain_sub->add_option("--out", explain_cmd.out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prep_cmd) {
            cmd_prep(prep, std::cout);
        } else if (*train_sub) {
            for (const auto& [flag, key] : train_keys)
                if (train_sub->get_option(flag)->count() > 0) train_cmd.overrides.emplace_back(key, train_flags[key]);
            cmd_train(train_cmd, std::cout);
        } else if (*eval_sub) {
            eval_cmd.split = split_from_string(eval_split);
            eval_cmd.settings = parse_settings(eval_settings);
            if (!eval_mode.empty()) eval_cmd.mode = score_mode_from_string(eval_mode);
            cmd_eval(eval_cmd, std::cout);
        } else if (*explain_sub) {
            explain_cmd.split = split_from_string(explain_split);
            explain_cmd.k_r = parse_k_list(kr);
            explain_cmd.k_e = parse_k_list(ke);
            if (!explain_mode.empty()) explain_cmd.mode = score_mode_from_string(explain_mode);
            cmd_explain(explain_cmd, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: config key '" << e.key() << "': " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
