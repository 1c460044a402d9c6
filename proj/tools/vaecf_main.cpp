// vaecf: preprocess, split, train, evaluate, recommend, gradcheck, sweep, synth.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "vaecf/config.hpp"
#include "vaecf/error.hpp"
#include "vaecf/gradcheck.hpp"
#include "vaecf/io.hpp"
#include "vaecf/metrics.hpp"
#include "vaecf/model.hpp"
#include "vaecf/synthetic.hpp"
#include "vaecf/trainer.hpp"

namespace fs = std::filesystem;
using namespace vaecf;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::size_t threads = 0;
    bool strict = false;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("-c,--config", opt.config_path, "configuration file (key = value lines)");
    cmd->add_option("--set", opt.sets, "override a config key, as key=value")->take_all();
    cmd->add_option("--threads", opt.threads, "evaluation worker threads");
    cmd->add_flag("--strict", opt.strict, "single-threaded deterministic execution");
}

RunConfig load_config(const CommonOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? RunConfig{} : RunConfig::from_file(opt.config_path);
    cfg.apply_environment();
    for (const auto& kv : opt.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opt.threads > 0) cfg.set("run.threads", std::to_string(opt.threads));
    if (opt.strict) cfg.set("run.strict", "true");
    return cfg;
}

std::size_t eval_threads(const RunConfig& cfg) {
    return cfg.get_bool("run.strict") ? 1 : std::max<std::uint64_t>(1, cfg.get_u64("run.threads"));
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        io::write_file_atomic(path, text);
    }
}

std::string with_suffix(const fs::path& path, const std::string& suffix) {
    return (path.parent_path() / (path.stem().string() + suffix + path.extension().string())).string();
}

std::string format_density(double density) {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed << density * 100.0 << "%";
    return out.str();
}

void print_corpus_summary(const SparseClicks& c) {
    std::cout << "users: " << c.n_users() << "\n"
              << "items: " << c.n_items() << "\n"
              << "interactions: " << c.nnz() << "\n"
              << "density: " << format_density(c.density()) << "\n";
}

// preprocess ----------------------------------------------------------------

int cmd_preprocess(const CommonOptions& common, const std::string& raw, const std::string& out) {
    auto cfg = load_config(common);
    if (!raw.empty()) cfg.set("data.raw", raw);
    if (!out.empty()) cfg.set("data.corpus", out);
    const fs::path raw_path = cfg.get_string("data.raw");
    if (!fs::exists(raw_path)) throw DataError("raw interaction file not found: " + raw_path.string());
    const auto format = format_config_from(cfg);
    const auto filter = filter_config_from(cfg);
    const auto clicks = binarize_and_filter(ingest(raw_path, format), filter);
    write_clicks(cfg.get_string("data.corpus"), clicks);
    print_corpus_summary(clicks);
    return 0;
}

// split ---------------------------------------------------------------------

int cmd_split(const CommonOptions& common, const std::string& corpus, const std::string& out_dir) {
    auto cfg = load_config(common);
    if (!corpus.empty()) cfg.set("data.corpus", corpus);
    if (!out_dir.empty()) cfg.set("data.split_dir", out_dir);
    const auto clicks = read_clicks(cfg.get_string("data.corpus"));
    const auto split = split_users(clicks, cfg.get_u64("split.n_validation"), cfg.get_u64("split.n_test"),
                                   cfg.get_u64("split.seed"));
    const fs::path dir = cfg.get_string("data.split_dir");
    fs::create_directories(dir);
    write_clicks(dir / "train.mrcx", split.train);
    write_clicks(dir / "validation.mrcx", split.validation);
    write_clicks(dir / "test.mrcx", split.test);
    std::cout << "train users: " << split.train.n_users() << "\n"
              << "validation users: " << split.validation.n_users() << "\n"
              << "test users: " << split.test.n_users() << "\n"
              << "items: " << split.train.n_items() << "\n"
              << "dropped held-out users: " << split.dropped_users << "\n"
              << "dropped held-out clicks: " << split.dropped_clicks << "\n";
    return 0;
}

// train ---------------------------------------------------------------------

struct TrainingData {
    SparseClicks train;
    SparseClicks validation;
    EvalSplit validation_split;
};

TrainingData load_training_data(const RunConfig& cfg) {
    const fs::path dir = cfg.get_string("data.split_dir");
    TrainingData d;
    d.train = read_clicks(dir / "train.mrcx");
    d.validation = read_clicks(dir / "validation.mrcx");
    d.validation_split =
        make_fold_in(d.validation, cfg.get_double("split.fold_in_fraction"), cfg.get_u64("split.seed"));
    if (d.validation_split.size() == 0) throw EmptyCorpusError("no usable validation users");
    return d;
}

void log_progress(const StepInfo& s) {
    if (s.step % 100 == 0) {
        std::cerr << "step " << s.step << " epoch " << s.epoch << " beta " << s.beta << " loss " << s.loss << "\n";
    }
}

int cmd_train(const CommonOptions& common, bool quiet) {
    const auto cfg = load_config(common);
    const auto data = load_training_data(cfg);
    const auto spec = model_spec_from(cfg, data.train.n_items());
    auto tc = train_config_from(cfg, spec.kind);
    if (!quiet) tc.on_step = log_progress;
    const std::string report_path = cfg.get_string("train.report");

    TrainReport report;
    if (cfg.get_bool("anneal.two_phase")) {
        auto res = train_two_phase(data.train, data.validation, data.validation_split, spec, tc);
        emit(format_history(res.search), with_suffix(report_path, "_search"));
        std::cout << "search beta_best: " << res.search.beta_best << "\n";
        report = std::move(res.final.report);
    } else {
        report = train(data.train, data.validation, data.validation_split, spec, tc).report;
    }
    emit(format_history(report), report_path);
    std::cout << "best " << tc.validation_metric.name() << ": " << report.best_metric << "\n"
              << "best step: " << report.best_step << "\n"
              << "beta at best: " << report.beta_best << "\n"
              << "checkpoint: " << *tc.checkpoint_path << "\n";
    return 0;
}

// evaluate ------------------------------------------------------------------

struct EvaluateOptions {
    std::string checkpoint;
    std::string corpus;
    std::string popularity;
    std::string compare;
    std::string metrics;
    std::string breakdown = "none";
    std::string breakdown_out;
    std::string per_user;
    std::string out;
};

void require_vocabulary(const Model& model, const SparseClicks& corpus, const std::string& what) {
    if (model.spec.n_items != corpus.n_items() ||
        (!model.item_ids.empty() && model.item_ids != corpus.item_ids())) {
        throw DataError(what + " and the evaluation corpus use different item vocabularies");
    }
}

int cmd_evaluate(const CommonOptions& common, const EvaluateOptions& opt) {
    const auto cfg = load_config(common);
    const auto metrics = parse_metric_list(opt.metrics.empty() ? cfg.get_string("eval.metrics") : opt.metrics);
    if (opt.breakdown != "none" && opt.breakdown != "quintiles") {
        throw ConfigError("--breakdown must be none or quintiles");
    }
    if (opt.checkpoint.empty() == opt.popularity.empty()) {
        throw ConfigError("evaluate needs exactly one of --checkpoint or --popularity");
    }
    const auto heldout = read_clicks(opt.corpus);
    const auto split =
        make_fold_in(heldout, cfg.get_double("split.fold_in_fraction"), cfg.get_u64("split.seed"));

    EvalOptions eo;
    eo.metrics = metrics;
    eo.batch_size = cfg.get_u64("eval.batch_size");
    eo.threads = eval_threads(cfg);

    EvalResult result;
    if (!opt.checkpoint.empty()) {
        const auto model = load_checkpoint(opt.checkpoint);
        require_vocabulary(model, heldout, "checkpoint " + opt.checkpoint);
        result = evaluate_model(model, split, eo);
    } else {
        const auto train_clicks = read_clicks(opt.popularity);
        if (train_clicks.item_ids() != heldout.item_ids()) {
            throw DataError("popularity corpus and the evaluation corpus use different item vocabularies");
        }
        result = evaluate_scorer(popularity_scorer(popularity_baseline(train_clicks)), heldout.n_items(), split, eo);
    }
    if (result.dropped_users + split.dropped_users > 0) {
        std::cerr << "dropped " << result.dropped_users + split.dropped_users << " users without held-out items\n";
    }
    emit(format_eval_report(result), opt.out);
    if (!opt.per_user.empty()) io::write_file_atomic(opt.per_user, format_per_user(result, heldout, split));

    if (opt.breakdown == "quintiles") {
        std::string text;
        if (!opt.compare.empty()) {
            const auto other = load_checkpoint(opt.compare);
            require_vocabulary(other, heldout, "checkpoint " + opt.compare);
            const auto second = evaluate_model(other, split, eo);
            if (second.users != result.users) throw DataError("compared models evaluated different users");
            text = format_paired_breakdown(
                paired_activity_breakdown(result.per_user[0], second.per_user[0], result.fold_in_sizes, 5));
        } else {
            text = format_breakdown(activity_breakdown(result.per_user[0], result.fold_in_sizes, 5));
        }
        if (opt.breakdown_out.empty()) {
            std::cout << "\n" << text;
        } else {
            io::write_file_atomic(opt.breakdown_out, text);
        }
    }
    return 0;
}

// recommend -----------------------------------------------------------------

std::vector<std::string> split_ids(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_recommend(const std::string& checkpoint, const std::string& items, std::size_t n) {
    const auto model = load_checkpoint(checkpoint);
    if (model.item_ids.empty()) throw DataError(checkpoint + ": checkpoint has no item vocabulary");
    std::unordered_map<std::string, std::uint32_t> index;
    for (std::size_t i = 0; i < model.item_ids.size(); ++i) index.emplace(model.item_ids[i], i);

    std::set<std::uint32_t> history;
    for (const auto& id : split_ids(items)) {
        if (auto it = index.find(id); it != index.end()) {
            history.insert(it->second);
        } else {
            std::cerr << "warning: unknown item id '" << id << "' skipped\n";
        }
    }
    if (history.empty()) throw DataError("empty history: none of the given item ids are in the checkpoint");

    const std::vector<std::uint32_t> fold_in(history.begin(), history.end());
    const auto scores = predict_scores(model, fold_in, true);
    std::vector<std::uint8_t> mask(scores.size(), 1);
    for (auto i : fold_in) mask[i] = 0;
    const auto top = top_r(scores, n, mask);

    std::ostringstream out;
    out.precision(10);
    out << "rank,item_id,score\n";
    for (std::size_t k = 0; k < top.order.size(); ++k) {
        out << k + 1 << ',' << model.item_ids[top.order[k]] << ',' << scores[top.order[k]] << '\n';
    }
    std::cout << out.str();
    return 0;
}

// gradcheck -----------------------------------------------------------------

int cmd_gradcheck(double step, double tolerance) {
    GradCheckConfig gc;
    gc.step = step;
    const auto results = check_all_configurations(gc);
    std::size_t failed = 0;
    std::printf("%-26s %-14s %-28s %s\n", "configuration", "max_rel_error", "worst_tensor", "status");
    for (const auto& r : results) {
        const bool ok = r.max_relative_error < tolerance;
        failed += ok ? 0 : 1;
        std::printf("%-26s %-14.3e %-28s %s\n", r.label().c_str(), r.max_relative_error, r.worst_tensor.c_str(),
                    ok ? "PASS" : "FAIL");
    }
    std::printf("%zu/%zu configurations below %.1e\n", results.size() - failed, results.size(), tolerance);
    return failed == 0 ? 0 : static_cast<int>(ExitCode::kNumeric);
}

// sweep ---------------------------------------------------------------------

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& s : split_ids(text)) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size()) throw ConfigError("'" + s + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty beta list");
    return out;
}

int cmd_sweep(const CommonOptions& common, const std::string& betas, const std::string& annealed_out,
              const std::string& out, bool quiet) {
    const auto cfg = load_config(common);
    const auto data = load_training_data(cfg);
    const auto spec = model_spec_from(cfg, data.train.n_items());
    auto base = train_config_from(cfg, spec.kind);
    base.checkpoint_path.reset();

    std::ostringstream table;
    table.precision(10);
    table << "beta,best_metric,best_step\n";
    for (double beta : parse_doubles(betas)) {
        auto tc = base;
        tc.anneal.total_anneal_steps = 0;
        tc.anneal.beta_cap = beta;
        const auto report = train(data.train, data.validation, data.validation_split, spec, tc).report;
        if (!quiet) std::cerr << "beta " << beta << ": " << report.best_metric << "\n";
        table << beta << ',' << report.best_metric << ',' << report.best_step << '\n';
    }
    emit(table.str(), out);

    if (!annealed_out.empty()) {
        auto tc = base;
        tc.anneal.beta_cap = 1.0;
        const auto report = train(data.train, data.validation, data.validation_split, spec, tc).report;
        io::write_file_atomic(annealed_out, format_history(report));
    }
    return 0;
}

// synth ---------------------------------------------------------------------

int cmd_synth(const SyntheticConfig& sc, const std::string& out, const std::string& raw) {
    const auto corpus = generate_synthetic(sc);
    if (!out.empty()) write_clicks(out, corpus.clicks);
    if (!raw.empty()) {
        std::ostringstream text;
        const auto& c = corpus.clicks;
        for (std::size_t u = 0; u < c.n_users(); ++u) {
            for (auto i : c.row(u)) text << c.user_ids()[u] << ',' << c.item_ids()[i] << ",5,0\n";
        }
        io::write_file_atomic(raw, text.str());
    }
    print_corpus_summary(corpus.clicks);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational and denoising autoencoders for collaborative filtering"};
    app.require_subcommand(1);
    CommonOptions common;
    bool quiet = false;

    std::string raw, corpus_out;
    auto* preprocess = app.add_subcommand("preprocess", "ingest a raw log, binarize and filter");
    add_common(preprocess, common);
    preprocess->add_option("raw", raw, "raw interaction file (overrides data.raw)");
    preprocess->add_option("-o,--out", corpus_out, "output corpus (overrides data.corpus)");

    std::string split_corpus, split_dir;
    auto* split = app.add_subcommand("split", "strong-generalization user split");
    add_common(split, common);
    split->add_option("--corpus", split_corpus, "input corpus (overrides data.corpus)");
    split->add_option("-o,--out-dir", split_dir, "output directory (overrides data.split_dir)");

    auto* train_cmd = app.add_subcommand("train", "train a model on the split corpora");
    add_common(train_cmd, common);
    train_cmd->add_flag("-q,--quiet", quiet, "no progress output");

    EvaluateOptions eval_opt;
    auto* evaluate = app.add_subcommand("evaluate", "rank held-out items for held-out users");
    add_common(evaluate, common);
    evaluate->add_option("--checkpoint", eval_opt.checkpoint, "model checkpoint");
    evaluate->add_option("--popularity", eval_opt.popularity, "evaluate the popularity baseline of this training corpus");
    evaluate->add_option("--corpus", eval_opt.corpus, "held-out corpus")->required();
    evaluate->add_option("--metrics", eval_opt.metrics, "comma-separated metrics, e.g. recall@20,ndcg@100");
    evaluate->add_option("--breakdown", eval_opt.breakdown, "none or quintiles (by fold-in activity)");
    evaluate->add_option("--compare", eval_opt.compare, "second checkpoint for a paired breakdown");
    evaluate->add_option("--breakdown-out", eval_opt.breakdown_out, "breakdown file (default: stdout)");
    evaluate->add_option("--per-user", eval_opt.per_user, "per-user metric file");
    evaluate->add_option("-o,--out", eval_opt.out, "report file (default: stdout)");

    std::string rec_checkpoint, rec_items;
    std::size_t rec_n = 10;
    auto* recommend = app.add_subcommand("recommend", "top-N items for a click history");
    recommend->add_option("--checkpoint", rec_checkpoint, "model checkpoint")->required();
    recommend->add_option("--items", rec_items, "comma-separated item ids")->required();
    recommend->add_option("-n,--n", rec_n, "number of recommendations")->check(CLI::PositiveNumber);

    double gc_step = 1e-5, gc_tolerance = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every objective gradient");
    gradcheck->add_option("--step", gc_step, "central-difference step")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", gc_tolerance, "maximum relative error")->check(CLI::PositiveNumber);

    std::string betas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.8,1", annealed_out, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "validation peak for each fixed beta");
    add_common(sweep, common);
    sweep->add_option("--betas", betas, "comma-separated beta values");
    sweep->add_option("--annealed", annealed_out, "also train with the annealed schedule and write its history here");
    sweep->add_option("-o,--out", sweep_out, "result table (default: stdout)");
    sweep->add_flag("-q,--quiet", quiet, "no progress output");

    SyntheticConfig sc;
    std::string synth_out, synth_raw;
    auto* synth = app.add_subcommand("synth", "sample a corpus from a random multinomial decoder");
    synth->add_option("--users", sc.n_users);
    synth->add_option("--items", sc.n_items);
    synth->add_option("--latent", sc.latent_dim);
    synth->add_option("--min-clicks", sc.min_clicks);
    synth->add_option("--max-clicks", sc.max_clicks);
    synth->add_option("--weight-scale", sc.weight_scale);
    synth->add_option("--seed", sc.seed);
    synth->add_option("-o,--out", synth_out, "output corpus");
    synth->add_option("--raw", synth_raw, "also write a user,item,rating,ts log");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
    }

    try {
        if (*preprocess) return cmd_preprocess(common, raw, corpus_out);
        if (*split) return cmd_split(common, split_corpus, split_dir);
        if (*train_cmd) return cmd_train(common, quiet);
        if (*evaluate) return cmd_evaluate(common, eval_opt);
        if (*recommend) return cmd_recommend(rec_checkpoint, rec_items, rec_n);
        if (*gradcheck) return cmd_gradcheck(gc_step, gc_tolerance);
        if (*sweep) return cmd_sweep(common, betas, annealed_out, sweep_out, quiet);
        if (*synth) return cmd_synth(sc, synth_out, synth_raw);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kData);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kData);
    }
    return static_cast<int>(ExitCode::kUsage);
}
