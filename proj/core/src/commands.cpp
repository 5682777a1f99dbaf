#include "flowedge/commands.hpp"

#include <cstdio>
#include <unistd.h>

#include "flowedge/checkpoint.hpp"
#include "flowedge/errors.hpp"
#include "flowedge/netpbm.hpp"

namespace fs = std::filesystem;

namespace flowedge {

AtomicOutput::AtomicOutput(fs::path target) : target_(std::move(target)) {
    if (target_.filename().empty()) target_ = target_.parent_path();
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw DataError("cannot create " + parent.string() + ": " + ec.message());
    staging_ = parent / ("." + target_.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(staging_, ec);
    fs::create_directories(staging_, ec);
    if (ec) throw DataError("cannot create " + staging_.string() + ": " + ec.message());
}

AtomicOutput::~AtomicOutput() {
    if (committed_) return;
    std::error_code ec;
    fs::remove_all(staging_, ec);
}

void AtomicOutput::commit() {
    std::error_code ec;
    fs::path old;
    if (fs::exists(target_)) {
        old = staging_;
        old += ".old";
        fs::remove_all(old, ec);
        fs::rename(target_, old, ec);
        if (ec) throw DataError("cannot replace " + target_.string() + ": " + ec.message());
    }
    fs::rename(staging_, target_, ec);
    if (ec) throw DataError("cannot promote output to " + target_.string() + ": " + ec.message());
    committed_ = true;
    if (!old.empty()) fs::remove_all(old, ec);
}

namespace {

void echo_config(const RunConfig& cfg, const fs::path& dir) { write_file(dir / files::config, cfg.to_text()); }

std::vector<Sample> load_dataset(const fs::path& dir) {
    auto samples = read_dataset(dir);
    if (samples.empty()) throw DataError("dataset " + dir.string() + " is empty");
    return samples;
}

void train_and_save(const RunConfig& cfg, VelocityNet& net, const std::vector<Sample>& data, Phase phase,
                    const fs::path& out) {
    AtomicOutput staged(out);
    echo_config(cfg, staged.path());
    TrainHooks hooks;
    hooks.on_checkpoint = [&](std::size_t step) {
        fs::create_directories(staged.path() / "checkpoints");
        save_checkpoint(staged.path() / "checkpoints" / ("step_" + std::to_string(step) + ".ece"), net);
    };
    const TrainConfig tc = cfg.train_config(phase);
    const auto log = phase == Phase::pretrain ? pretrain(net, data, tc, hooks) : finetune(net, data, tc, hooks);
    write_file(staged.path() / files::train_log, training_log_csv(log));
    save_checkpoint(staged.path() / files::checkpoint, net);
    staged.commit();
}

fs::path resolve_predictions(const fs::path& p) {
    if (fs::is_directory(p / files::predictions)) return p / files::predictions;
    return p;
}

}  // namespace

VelocityNet load_model(const RunConfig& cfg, const fs::path& checkpoint) {
    VelocityNet net = load_checkpoint(checkpoint);
    require_architecture(cfg.net, net.config());
    return net;
}

void run_gen_data(const RunConfig& cfg, const fs::path& out) {
    cfg.validate();
    AtomicOutput staged(out);
    write_dataset(staged.path(), generate(cfg.scene_spec(), cfg.count));
    echo_config(cfg, staged.path());
    staged.commit();
}

void run_pretrain(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
    cfg.validate();
    const auto samples = load_dataset(data);
    VelocityNet net(cfg.net, cfg.init_seed);
    train_and_save(cfg, net, samples, Phase::pretrain, out);
}

void run_finetune(const RunConfig& cfg, const fs::path& base_checkpoint, const fs::path& data, const fs::path& out) {
    cfg.validate();
    const auto samples = load_dataset(data);
    VelocityNet net = load_model(cfg, base_checkpoint);
    net.attach_lora(cfg.lora_seed);
    train_and_save(cfg, net, samples, Phase::finetune, out);
}

void run_infer(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data, const fs::path& out) {
    cfg.validate();
    const VelocityNet net = load_model(cfg, checkpoint);
    const auto samples = load_dataset(data);
    const auto preds = predict_dataset(net, samples, cfg.infer_options());
    AtomicOutput staged(out);
    fs::create_directories(staged.path() / files::predictions);
    std::string manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        write_netpbm(staged.path() / files::predictions / (samples[i].id + ".pgm"), preds[i]);
        manifest += samples[i].id + "\n";
    }
    write_file(staged.path() / files::predictions / "manifest.txt", manifest);
    echo_config(cfg, staged.path());
    staged.commit();
}

void run_eval(const RunConfig& cfg, const fs::path& data, const fs::path& predictions, const fs::path& out,
              bool walls) {
    cfg.validate();
    const auto samples = load_dataset(data);
    const fs::path pred_dir = resolve_predictions(predictions);
    std::vector<std::string> ids;
    std::vector<EdgeMap> preds, gts;
    for (const Sample& s : samples) {
        const fs::path p = pred_dir / (s.id + ".pgm");
        if (!fs::exists(p)) throw DataError("no prediction for id '" + s.id + "' (expected " + p.string() + ")");
        EdgeMap pred = read_netpbm(p);
        if (pred.channels != 1) pred = to_gray(pred);
        EdgeMap gt = s.gt.channels == 1 ? s.gt : to_gray(s.gt);
        if (!pred.same_dims(gt))
            throw DataError("prediction for '" + s.id + "' is " + std::to_string(pred.height) + "x" +
                            std::to_string(pred.width) + ", ground truth is " + std::to_string(gt.height) + "x" +
                            std::to_string(gt.width));
        ids.push_back(s.id);
        preds.push_back(std::move(pred));
        gts.push_back(std::move(gt));
    }

    AtomicOutput staged(out);
    std::string summary;
    for (EvalMode mode : {EvalMode::seval, EvalMode::ceval}) {
        const EvalReport r = ods_ois(sweep(ids, preds, gts, cfg.sweep_options(mode)));
        write_file(staged.path() / (mode == EvalMode::seval ? files::seval : files::ceval), report_csv(r));
        summary += report_text(r);
    }
    if (walls) {
        std::string csv = "id,iou,tp,fp,fn,precision,recall,f\n";
        double iou_sum = 0.0;
        MatchCounts pooled;
        char buf[256];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const WallMetrics m = wall_metrics(preds[i], gts[i], MatchTolerance{cfg.tolerance});
            iou_sum += m.iou;
            pooled += m.boundary_counts;
            std::snprintf(buf, sizeof buf, "%s,%.6f,%zu,%zu,%zu,%.6f,%.6f,%.6f\n", ids[i].c_str(), m.iou,
                          m.boundary_counts.tp, m.boundary_counts.fp, m.boundary_counts.fn, m.boundary.precision,
                          m.boundary.recall, m.boundary.f);
            csv += buf;
        }
        const PRF p = prf(pooled);
        const double mean_iou = iou_sum / static_cast<double>(ids.size());
        std::snprintf(buf, sizeof buf, "MEAN,%.6f,%zu,%zu,%zu,%.6f,%.6f,%.6f\n", mean_iou, pooled.tp, pooled.fp,
                      pooled.fn, p.precision, p.recall, p.f);
        csv += buf;
        write_file(staged.path() / files::walls, csv);
        std::snprintf(buf, sizeof buf, "Walls over %zu images\n  IoU=%.4f  boundary F=%.4f  P=%.4f  R=%.4f\n", ids.size(),
                      mean_iou, p.f, p.precision, p.recall);
        summary += buf;
    }
    write_file(staged.path() / files::summary, summary);
    echo_config(cfg, staged.path());
    staged.commit();
}

void run_sweep_gamma(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data, const fs::path& out) {
    cfg.validate();
    const VelocityNet net = load_model(cfg, checkpoint);
    const auto samples = load_dataset(data);
    InferOptions opts = cfg.infer_options();
    opts.use_cfg = true;
    const auto rows = gamma_sweep(cfg.gammas, [&](double g) {
        opts.guidance = g;
        return predict_dataset(net, samples, opts);
    });
    AtomicOutput staged(out);
    write_file(staged.path() / files::gamma, gamma_csv(rows));
    echo_config(cfg, staged.path());
    staged.commit();
}

std::string error_line(int code, const std::string& message) {
    const char* kind = code == 2 ? "config" : code == 3 ? "data" : code == 4 ? "numeric" : "internal";
    std::string flat = message;
    for (char& c : flat)
        if (c == '\n' || c == '\r') c = ' ';
    return "error code=" + std::to_string(code) + " kind=" + kind + " message=" + flat;
}

}  // namespace flowedge
