#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cgsam/checkpoint.hpp"
#include "cgsam/run_config.hpp"
#include "cgsam/service.hpp"

namespace cgsam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    std::string config;
    std::string checkpoint;
    std::string split;
    std::string dataset;
    std::string mode;
    std::string out;
    std::string host = "127.0.0.1";
    std::string preset;
    std::optional<std::uint64_t> seed;
    int port = 8080;
    real val_fraction = 0.2;
};

void write_json_file(const fs::path& path, const json& j)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

RunConfig load_config(const Flags& flags)
{
    RunConfig c = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
    if (flags.seed) c.train.seed = *flags.seed;
    if (!flags.mode.empty()) {
        try {
            c.train.mode = parse_prompt_mode(flags.mode);
        } catch (const InputError& e) {
            throw ConfigError(std::string("--mode: ") + e.what());
        }
    }
    if (!flags.dataset.empty()) c.dataset = flags.dataset;
    c.validate();
    return c;
}

std::vector<std::string> split_ids(const DatasetManifest& manifest, const fs::path& split)
{
    if (split.empty()) {
        std::vector<std::string> ids;
        for (const auto& s : manifest.samples) ids.push_back(s.id);
        return ids;
    }
    return load_split(split).ids;
}

int cmd_generate(const Flags& flags, std::ostream& out)
{
    RunConfig c = load_config(flags);
    if (flags.seed) c.generator.seed = *flags.seed;
    const fs::path root = flags.out.empty() ? c.dataset : fs::path(flags.out);
    if (root.empty()) throw ConfigError("dataset: no output directory (set it in the config or pass --out)");
    if (!(flags.val_fraction >= 0 && flags.val_fraction < 1)) throw ConfigError("--val-fraction: must be in [0, 1)");
    const DatasetManifest m = generate_synthetic_dataset(c.generator, root);
    const SplitManifest train = make_split(m, 1.0 - flags.val_fraction, c.generator.seed);
    save_split(root / "train.json", train);
    save_split(root / "val.json", complement_split(m, train));
    out << "generated " << m.samples.size() << " samples in " << root.string() << " (" << train.ids.size()
        << " train, " << m.samples.size() - train.ids.size() << " val)\n";
    return kExitOk;
}

json epoch_json(const EpochLog& l)
{
    return {{"epoch", l.epoch},   {"loss", l.loss.total}, {"bce", l.loss.bce},         {"dice", l.loss.dice},
            {"iou", l.loss.iou},  {"lr", l.lr},           {"val_miou", l.val_miou},    {"steps", l.steps}};
}

int cmd_train(const Flags& flags, std::ostream& out)
{
    const RunConfig c = load_config(flags);
    if (c.dataset.empty()) throw ConfigError("dataset: required for training");
    const fs::path run = flags.out.empty() ? c.output_dir : fs::path(flags.out);
    fs::create_directories(run);
    save_run_config(run / "config.json", c);

    const DatasetManifest m = load_manifest(c.dataset);
    const auto train_set = load_samples(m, split_ids(m, c.train_split));
    const auto val_set = c.val_split.empty() ? std::vector<LoadedSample>{} : load_samples(m, load_split(c.val_split).ids);

    ClipGuidedSam model(c.model);
    std::ofstream log(run / "metrics.jsonl");
    const json extra = {{"train", to_json(c.train)}};
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& l) {
        log << epoch_json(l).dump() << '\n' << std::flush;
        out << "epoch " << l.epoch << "  loss " << std::fixed << std::setprecision(4) << l.loss.total << "  val mIoU "
            << l.val_miou << '\n';
    };
    hooks.on_best = [&](const EpochLog& l) {
        json e = extra;
        e["epoch"] = l.epoch;
        e["val_miou"] = l.val_miou;
        save_checkpoint(run / "best.ckpt", model, e);
    };
    const TrainResult r = train(model, c.train, train_set, val_set, hooks);
    out << "best epoch " << r.best_epoch << " (val mIoU " << r.best_val_miou << "), checkpoint "
        << (run / "best.ckpt").string() << '\n';
    return kExitOk;
}

int cmd_eval(const Flags& flags, std::ostream& out)
{
    if (flags.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    if (flags.split.empty() && flags.dataset.empty()) throw ConfigError("--split or --dataset is required");
    LoadedCheckpoint ck = load_checkpoint(flags.checkpoint);

    DatasetManifest m;
    std::vector<std::string> ids;
    if (!flags.split.empty()) {
        const SplitManifest s = load_split(flags.split);
        m = load_manifest(flags.dataset.empty() ? fs::path(s.parent) : fs::path(flags.dataset));
        ids = s.ids;
    } else {
        m = load_manifest(flags.dataset);
        ids = split_ids(m, {});
    }
    const auto samples = load_samples(m, ids);

    EvalOptions o;
    if (ck.extra.contains("train")) {
        const TrainConfig t = train_config_from_json(ck.extra["train"]);
        o.pipeline = {t.mode, t.tau, t.k, t.seed, true};
        o.threshold = t.eval_threshold;
    }
    if (!flags.mode.empty()) {
        try {
            o.pipeline.mode = parse_prompt_mode(flags.mode);
        } catch (const InputError& e) {
            throw ConfigError(std::string("--mode: ") + e.what());
        }
    }
    if (flags.seed) o.pipeline.seed = *flags.seed;
    const MetricsRecord r = evaluate(*ck.model, samples, o);

    json record = to_json(r);
    record["mode"] = to_string(o.pipeline.mode);
    record["seed"] = o.pipeline.seed;
    const fs::path dest = flags.out.empty() ? fs::path(flags.checkpoint).replace_extension(".metrics.json") : fs::path(flags.out);
    write_json_file(dest, record);

    out << "mode " << to_string(o.pipeline.mode) << ", " << r.samples << " samples\n";
    for (const auto& [src, n] : r.point_sources) out << "  points from " << src << ": " << n << '\n';
    out << std::fixed << std::setprecision(4);
    out << "  mIoU      " << r.miou << '\n'
        << "  MAE       " << r.mae << '\n'
        << "  S_alpha   " << r.s_alpha << '\n'
        << "  E_phi     " << r.e_phi << '\n'
        << "  F_beta_w  " << r.f_beta_w << '\n';
    for (const auto& [cls, iou] : r.per_class_iou) out << "  IoU " << std::left << std::setw(10) << cls << iou << '\n';
    out << "wrote " << dest.string() << '\n';
    return kExitOk;
}

int cmd_report_params(const Flags& flags, std::ostream& out)
{
    RunConfig c = load_config(flags);
    if (flags.preset == "vit_b") c.model = ModelConfig::vit_b();
    else if (flags.preset == "toy") c.model = ModelConfig::toy();
    else if (!flags.preset.empty()) throw ConfigError("--preset: expected toy or vit_b");
    c.model.validate();
    const ParamReport r = ClipGuidedSam::count(c.model, trainable_predicate(c.model, c.train.freeze));

    json rows = json::array();
    auto mega = [](std::size_t n) { return static_cast<double>(n) / 1e6; };
    out << std::left << std::setw(26) << "component" << std::right << std::setw(12) << "total (M)" << std::setw(14)
        << "trainable (M)" << '\n';
    out << std::fixed << std::setprecision(3);
    for (const ParamReportEntry& e : r.entries) {
        out << std::left << std::setw(26) << e.name << std::right << std::setw(12) << mega(e.total) << std::setw(14)
            << mega(e.trainable) << '\n';
        rows.push_back({{"component", e.name}, {"total", e.total}, {"trainable", e.trainable}});
    }
    out << std::left << std::setw(26) << "all" << std::right << std::setw(12) << mega(r.total) << std::setw(14)
        << mega(r.trainable) << '\n';
    out << "base segmentation (encoder w/o adapters + prompt encoder + decoder): " << mega(r.base_segmentation())
        << "M\n";
    out << "adapters: " << mega(r.adapters) << "M, " << std::setprecision(2) << r.adapter_overhead_percent()
        << "% of the image encoder\n";
    if (!flags.out.empty())
        write_json_file(flags.out, {{"components", rows},
                                    {"total", r.total},
                                    {"trainable", r.trainable},
                                    {"adapters", r.adapters},
                                    {"base_segmentation", r.base_segmentation()},
                                    {"adapter_overhead_percent", r.adapter_overhead_percent()}});
    return kExitOk;
}

int cmd_serve(const Flags& flags, std::ostream& out)
{
    if (flags.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    LoadedCheckpoint ck = load_checkpoint(flags.checkpoint);
    ServiceOptions o;
    o.model_name = fs::path(flags.checkpoint).stem().string();
    if (ck.extra.contains("train")) {
        const TrainConfig t = train_config_from_json(ck.extra["train"]);
        o.tau = t.tau;
        o.k = t.k;
    }
    if (flags.seed) o.default_seed = *flags.seed;
    const SegmentService service(std::shared_ptr<const ClipGuidedSam>(std::move(ck.model)), o);
    HttpServer server(service);
    const int port = server.bind(flags.host, flags.port);
    out << "serving " << o.model_name << " on http://" << flags.host << ":" << port << '\n' << std::flush;
    server.run();
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Text-guided promptable segmentation: training, evaluation and serving"};
    app.require_subcommand(1);
    Flags f;
    auto add_seed = [&](CLI::App* c) { c->add_option("--seed", f.seed, "Run seed (overrides the config)"); };

    auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset with train/val splits");
    gen->add_option("--config", f.config, "Run config (generator section)");
    gen->add_option("--out", f.out, "Dataset directory (default: config dataset)");
    gen->add_option("--val-fraction", f.val_fraction, "Fraction of samples held out for validation");
    add_seed(gen);

    auto* tr = app.add_subcommand("train", "Train a model; writes config.json, metrics.jsonl and best.ckpt");
    tr->add_option("--config", f.config, "Run config")->required();
    tr->add_option("--mode", f.mode, "manual or semi_automatic");
    tr->add_option("--dataset", f.dataset, "Dataset manifest (overrides the config)");
    tr->add_option("--out", f.out, "Run directory (overrides the config)");
    add_seed(tr);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    ev->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
    ev->add_option("--split", f.split, "Split manifest");
    ev->add_option("--dataset", f.dataset, "Dataset manifest (default: the split's parent)");
    ev->add_option("--mode", f.mode, "manual or semi_automatic (default: training mode)");
    ev->add_option("--out", f.out, "Metrics file (default: <checkpoint>.metrics.json)");
    add_seed(ev);

    auto* rp = app.add_subcommand("report-params", "Parameter counts per component");
    rp->add_option("--config", f.config, "Run config");
    rp->add_option("--preset", f.preset, "toy or vit_b (replaces the model section)");
    rp->add_option("--out", f.out, "Also write the report as JSON");

    auto* sv = app.add_subcommand("serve", "Serve a checkpoint over HTTP");
    sv->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
    sv->add_option("--port", f.port, "Port (0 picks a free one)");
    sv->add_option("--host", f.host, "Bind address");
    add_seed(sv);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        const int code = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) return cmd_generate(f, out);
        if (*tr) return cmd_train(f, out);
        if (*ev) return cmd_eval(f, out);
        if (*rp) return cmd_report_params(f, out);
        if (*sv) return cmd_serve(f, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const TrainingAborted& e) {
        err << "training aborted: " << e.what() << '\n';
        return kExitAborted;
    } catch (const VersionMismatch& e) {
        err << "version mismatch: " << e.what() << '\n';
        return kExitVersion;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace cgsam
