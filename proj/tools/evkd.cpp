// evkd: command-line front end for the event tracking toolkit.
//
// Subcommands cover the whole pipeline: synth (suite generation), repr
// (representation summaries), train-teacher, distill, track, eval, and
// gradcheck. Pipelines communicate through files only; every subcommand
// writes a config_echo.json into its output directory so runs can be
// reproduced from the artifacts alone.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include "evkd/dataset.hpp"
#include "evkd/gradcheck.hpp"
#include "evkd/metrics.hpp"
#include "evkd/track.hpp"
#include "evkd/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace evkd;

namespace {

RunConfig config_from_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

void write_echo(const fs::path& out_dir, const RunConfig& cfg) {
    fs::create_directories(out_dir);
    write_file((out_dir / "config_echo.json").string(), to_json(cfg).dump(2) + "\n");
}

// Sequence directories are wherever an events.evbin lives; accepts a single
// sequence, a split directory, or a whole suite root.
std::vector<fs::path> find_sequence_dirs(const fs::path& root) {
    std::vector<fs::path> dirs;
    if (fs::exists(root / "events.evbin")) {
        dirs.push_back(root);
        return dirs;
    }
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file() && entry.path().filename() == "events.evbin")
            dirs.push_back(entry.path().parent_path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw InvalidSpec("no sequences found under " + root.string());
    return dirs;
}

constexpr const char* kLogHeader = "step\tfocal\tl1\tgiou\tsim\tfeat\tres\ttotal\n";

void print_epochs(const std::vector<EpochStats>& epochs) {
    for (std::size_t i = 0; i < epochs.size(); ++i)
        std::printf("epoch %zu  steps=%d  total=%.6f  focal=%.4f l1=%.4f giou=%.4f "
                    "sim=%.4f feat=%.4f res=%.4f\n",
                    i, epochs[i].steps, epochs[i].mean.total, epochs[i].mean.focal,
                    epochs[i].mean.l1, epochs[i].mean.giou, epochs[i].mean.sim,
                    epochs[i].mean.feat, epochs[i].mean.res);
}

int cmd_synth(const RunConfig& cfg) {
    const SuitePreset preset = preset_from_name(cfg.preset);
    const auto plan = plan_suite(preset, cfg.synth_seed);
    make_suite(preset, cfg.synth_seed, cfg.out_dir);
    write_echo(cfg.out_dir, cfg);
    std::printf("wrote %zu sequences (preset %s, seed %llu) to %s\n", plan.size(),
                cfg.preset.c_str(), static_cast<unsigned long long>(cfg.synth_seed),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_repr(const RunConfig& cfg, const std::string& mode, const std::string& in,
             int cell_x, int cell_y, std::uint64_t cell_t, std::uint64_t tau) {
    if (mode != "frames" && mode != "voxel" && mode != "timesurface")
        throw InvalidSpec("unknown repr mode: " + mode);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    nlohmann::json summary;
    summary["mode"] = mode;
    if (mode == "voxel") summary["cell"] = {cell_x, cell_y, cell_t};
    if (mode == "timesurface") summary["tau_us"] = tau;
    summary["sequences"] = nlohmann::json::array();

    for (const fs::path& dir : find_sequence_dirs(in)) {
        const SequenceData seq = load_sequence(dir);
        const std::size_t n = seq.frames();
        std::string csv;
        char row[160];
        std::uint64_t sum_counts = 0;

        if (mode == "frames") {
            csv = "frame,t_start,t_end,pos,neg,total\n";
            std::vector<TimeWindow> windows(n);
            for (std::size_t i = 0; i < n; ++i) windows[i] = seq.window(i);
            const WindowStackResult stk = stack_by_windows(seq.events, windows);
            for (std::size_t i = 0; i < n; ++i) {
                const EventFrame& f = stk.frames[i];
                const std::size_t plane =
                    static_cast<std::size_t>(f.planes.height) * f.planes.width;
                std::uint64_t pos = 0, neg = 0;
                for (std::size_t k = 0; k < plane; ++k) pos += f.planes.data[k];
                for (std::size_t k = plane; k < 2 * plane; ++k) neg += f.planes.data[k];
                std::snprintf(row, sizeof(row), "%zu,%llu,%llu,%llu,%llu,%llu\n", i,
                              static_cast<unsigned long long>(f.window.first),
                              static_cast<unsigned long long>(f.window.second),
                              static_cast<unsigned long long>(pos),
                              static_cast<unsigned long long>(neg),
                              static_cast<unsigned long long>(pos + neg));
                csv += row;
                sum_counts += pos + neg;
            }
        } else if (mode == "voxel") {
            csv = "frame,nx,ny,nt,cells,count\n";
            const VoxelSpec vs{cell_x, cell_y, cell_t};
            for (std::size_t i = 0; i < n; ++i) {
                const VoxelGrid g = voxelize(seq.slice(i), seq.window(i), vs);
                const std::uint64_t c = g.total_count();
                std::snprintf(row, sizeof(row), "%zu,%d,%d,%d,%zu,%llu\n", i, g.nx,
                              g.ny, g.nt, g.counts.size(),
                              static_cast<unsigned long long>(c));
                csv += row;
                sum_counts += c;
            }
        } else {
            csv = "frame,t_ref,tau,active,pos_mean,neg_mean\n";
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint64_t t_ref = seq.window(i).second;
                const TimeSurface ts = time_surface(seq.events, t_ref, tau);
                const std::size_t plane =
                    static_cast<std::size_t>(ts.values.height) * ts.values.width;
                double pos_sum = 0, neg_sum = 0;
                std::uint64_t active = 0;
                for (std::size_t k = 0; k < plane; ++k) {
                    pos_sum += ts.values.data[k];
                    neg_sum += ts.values.data[k + plane];
                    active += (ts.values.data[k] > 0) + (ts.values.data[k + plane] > 0);
                }
                std::snprintf(row, sizeof(row), "%zu,%llu,%llu,%llu,%.10g,%.10g\n", i,
                              static_cast<unsigned long long>(t_ref),
                              static_cast<unsigned long long>(tau),
                              static_cast<unsigned long long>(active),
                              pos_sum / plane, neg_sum / plane);
                csv += row;
            }
        }

        write_file((out / (seq.name + ".csv")).string(), csv);
        nlohmann::json entry{{"name", seq.name},
                             {"frames", n},
                             {"total_events", seq.events.size()}};
        if (mode != "timesurface") entry["sum_counts"] = sum_counts;
        summary["sequences"].push_back(entry);
    }

    write_file((out / "summary.json").string(), summary.dump(2) + "\n");
    write_echo(out, cfg);
    std::printf("wrote %zu summaries to %s\n", summary["sequences"].size(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_train_teacher(RunConfig cfg) {
    cfg.train.stage = Stage::Teacher;
    cfg.train.validate();
    const auto data = load_split(cfg.data_dir, "train");
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    std::ofstream log(out / "train_log.tsv");
    log << kLogHeader;
    TrainResult<float> r = train_teacher<float>(data, cfg.train, &log);
    print_epochs(r.epochs);

    save_tracker((out / "teacher.ckpt").string(), r.net, cfg.train, cfg.train.epochs,
                 static_cast<const AdamW<float>*>(nullptr), r.rng_state);
    write_echo(out, cfg);
    std::printf("saved teacher checkpoint (%llu optimizer steps) to %s\n",
                static_cast<unsigned long long>(r.optimizer_steps),
                (out / "teacher.ckpt").string().c_str());
    return 0;
}

int cmd_distill(RunConfig cfg) {
    cfg.train.stage = Stage::Student;
    cfg.train.teacher_checkpoint = cfg.teacher_path;
    cfg.train.validate();
    LoadedTracker<float> teacher = load_tracker<float>(cfg.teacher_path);
    const auto data = load_split(cfg.data_dir, "train");
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    std::ofstream log(out / "train_log.tsv");
    log << kLogHeader;
    TrainResult<float> r = distill_student<float>(data, teacher.net, cfg.train, &log);
    print_epochs(r.epochs);

    save_tracker((out / "student.ckpt").string(), r.net, cfg.train, cfg.train.epochs,
                 static_cast<const AdamW<float>*>(nullptr), r.rng_state);
    write_echo(out, cfg);
    std::printf("saved student checkpoint (%llu optimizer steps) to %s\n",
                static_cast<unsigned long long>(r.optimizer_steps),
                (out / "student.ckpt").string().c_str());
    return 0;
}

int cmd_track(const RunConfig& cfg, const std::string& split) {
    LoadedTracker<float> lt = load_tracker<float>(cfg.ckpt_path);
    TrackOptions opt;
    if (lt.meta.contains("train")) {
        const TrainConfig tc = train_from_json(lt.meta.at("train"));
        opt.template_context = tc.template_context;
        opt.search_context = tc.search_context;
    }
    opt.deterministic = cfg.deterministic;
    const int threads = cfg.deterministic ? 1 : std::max(1, cfg.threads);

    const auto seqs = load_split(cfg.data_dir, split);
    const auto results = run_ope(lt.net, seqs, opt, threads);
    write_results(cfg.out_dir, results);
    write_echo(cfg.out_dir, cfg);
    std::printf("tracked %zu sequences (threads=%d) to %s\n", results.size(), threads,
                cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& split) {
    const auto seqs = load_split(cfg.data_dir, split);
    std::vector<SequenceScore> scores;
    std::map<std::string, std::vector<std::string>> attrs;
    double total_s = 0;
    std::uint64_t timed_frames = 0;

    for (const SequenceData& seq : seqs) {
        const SequenceResult r = load_result(cfg.results_dir, seq.name);
        scores.push_back(score_sequence(seq.name, r.boxes, seq.boxes));
        attrs[seq.name] = seq.attributes;
        for (std::size_t i = 1; i < r.latency_s.size(); ++i) {
            total_s += r.latency_s[i];
            ++timed_frames;
        }
    }

    MetricReport report = aggregate_scores(scores);
    report.fps = total_s > 0 ? static_cast<double>(timed_frames) / total_s : 0.0;
    report.per_attribute = attribute_breakdown(scores, attrs, &report.notes);
    emit_report(report, cfg.out_dir);
    write_echo(cfg.out_dir, cfg);
    std::printf("SR=%.4f PR=%.4f NPR=%.4f FPS=%.1f  (%zu sequences) -> %s\n",
                report.sr, report.pr, report.npr, report.fps, scores.size(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool have_config) {
    int embed_dim = 16, num_layers = 2;
    if (have_config) {
        embed_dim = cfg.train.backbone.embed_dim;
        num_layers = cfg.train.backbone.num_layers;
    }
    const ModelGradCheck r = run_model_gradcheck(embed_dim, num_layers);
    for (const TermCheck& t : r.terms)
        std::printf("term %-8s rel_err=%.3e\n", t.name.c_str(), t.rel_err);
    std::printf("full model   rel_err=%.3e\n", r.full_model);
    std::printf("dead coords  |numeric|=%.3e\n", r.dead_coord_numeric);
    const double max_rel = std::max(r.full_model, r.worst_term());
    std::printf("max relative error = %.3e\n", max_rel);
    const bool ok = r.full_model <= 1e-4 && r.worst_term() <= 1e-6 &&
                    r.dead_coord_numeric <= 1e-6;
    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-stream tracking toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, teacher_path, ckpt_path, results_dir;
    std::string preset = "smoke", mode, in_dir, split = "test";
    std::uint64_t seed = 7, cell_t = 250, tau = 1000;
    int threads = 0, epochs = -1, cell_x = 8, cell_y = 8;
    bool deterministic = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config")
            ->check(CLI::ExistingFile);
        sub->add_option("--threads", threads, "worker thread cap")
            ->envname("EVKD_THREADS");
        sub->add_flag("--deterministic", deterministic,
                      "single-threaded numeric paths, zeroed latencies");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic suite");
    add_common(synth);
    synth->add_option("--preset", preset, "suite preset (smoke|ablation)");
    synth->add_option("--seed", seed, "suite seed");
    synth->add_option("--out", out_dir, "output suite directory")->required();

    CLI::App* repr = app.add_subcommand("repr", "summarize event representations");
    add_common(repr);
    repr->add_option("--mode", mode, "frames|voxel|timesurface")->required();
    repr->add_option("--in", in_dir, "sequence, split, or suite directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    repr->add_option("--out", out_dir, "output directory")->required();
    repr->add_option("--cell-x", cell_x, "voxel cell width (px)");
    repr->add_option("--cell-y", cell_y, "voxel cell height (px)");
    repr->add_option("--cell-t", cell_t, "voxel cell duration (us)");
    repr->add_option("--tau", tau, "time-surface decay constant (us)");

    CLI::App* teach = app.add_subcommand("train-teacher", "train the two-view teacher");
    add_common(teach);
    teach->add_option("--data", data_dir, "suite directory")
        ->check(CLI::ExistingDirectory);
    teach->add_option("--out", out_dir, "output directory")->required();
    teach->add_option("--epochs", epochs, "override epoch count");
    teach->add_option("--seed", seed, "override training seed");

    CLI::App* dist = app.add_subcommand("distill", "distill the event-only student");
    add_common(dist);
    dist->add_option("--teacher", teacher_path, "teacher checkpoint")
        ->check(CLI::ExistingFile);
    dist->add_option("--data", data_dir, "suite directory")
        ->check(CLI::ExistingDirectory);
    dist->add_option("--out", out_dir, "output directory")->required();
    dist->add_option("--epochs", epochs, "override epoch count");
    dist->add_option("--seed", seed, "override training seed");

    CLI::App* track = app.add_subcommand("track", "run one-pass evaluation tracking");
    add_common(track);
    track->add_option("--ckpt", ckpt_path, "tracker checkpoint")
        ->check(CLI::ExistingFile);
    track->add_option("--data", data_dir, "suite directory")
        ->check(CLI::ExistingDirectory);
    track->add_option("--out", out_dir, "result directory")->required();
    track->add_option("--split", split, "dataset split (default test)");

    CLI::App* eval = app.add_subcommand("eval", "score tracking results");
    add_common(eval);
    eval->add_option("--results", results_dir, "tracking result directory")
        ->check(CLI::ExistingDirectory);
    eval->add_option("--data", data_dir, "suite directory")
        ->check(CLI::ExistingDirectory);
    eval->add_option("--out", out_dir, "report directory")->required();
    eval->add_option("--split", split, "dataset split (default test)");

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(gc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints the offending flag
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = config_from_file(config_path);

        // flags override config fields
        CLI::App* sub = app.get_subcommands().front();
        auto passed = [&](const char* f) {
            return sub->get_option(f)->count() > 0;
        };
        if (passed("--threads")) cfg.threads = threads;
        if (passed("--deterministic")) cfg.deterministic = deterministic;
        if (!data_dir.empty()) cfg.data_dir = data_dir;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!teacher_path.empty()) cfg.teacher_path = teacher_path;
        if (!ckpt_path.empty()) cfg.ckpt_path = ckpt_path;
        if (!results_dir.empty()) cfg.results_dir = results_dir;
        if (epochs >= 0) cfg.train.epochs = epochs;

        if (sub == synth) {
            if (passed("--preset")) cfg.preset = preset;
            if (passed("--seed")) cfg.synth_seed = seed;
            if (cfg.out_dir.empty()) throw ConfigError("synth requires --out");
            return cmd_synth(cfg);
        }
        if (sub == repr) return cmd_repr(cfg, mode, in_dir, cell_x, cell_y, cell_t, tau);
        if (sub == teach) {
            if (passed("--seed")) cfg.train.seed = seed;
            if (cfg.data_dir.empty()) throw ConfigError("train-teacher requires --data");
            return cmd_train_teacher(cfg);
        }
        if (sub == dist) {
            if (passed("--seed")) cfg.train.seed = seed;
            if (cfg.data_dir.empty()) throw ConfigError("distill requires --data");
            if (cfg.teacher_path.empty()) throw ConfigError("distill requires --teacher");
            return cmd_distill(cfg);
        }
        if (sub == track) {
            if (cfg.data_dir.empty()) throw ConfigError("track requires --data");
            if (cfg.ckpt_path.empty()) throw ConfigError("track requires --ckpt");
            return cmd_track(cfg, split);
        }
        if (sub == eval) {
            if (cfg.data_dir.empty()) throw ConfigError("eval requires --data");
            if (cfg.results_dir.empty()) throw ConfigError("eval requires --results");
            return cmd_eval(cfg, split);
        }
        return cmd_gradcheck(cfg, !config_path.empty());
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InvalidSpec& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const UnknownTag& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const MissingView& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
