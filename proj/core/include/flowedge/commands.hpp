#pragma once

#include <filesystem>
#include <string>

#include "flowedge/run_config.hpp"

namespace flowedge {

// Writes into a hidden sibling directory and renames it over `target` on commit.
// An uncommitted directory is removed on destruction.
class AtomicOutput {
public:
    explicit AtomicOutput(std::filesystem::path target);
    ~AtomicOutput();
    AtomicOutput(const AtomicOutput&) = delete;
    AtomicOutput& operator=(const AtomicOutput&) = delete;

    const std::filesystem::path& path() const { return staging_; }
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool committed_ = false;
};

namespace files {
inline constexpr const char* config = "config.txt";
inline constexpr const char* checkpoint = "checkpoint.ece";
inline constexpr const char* train_log = "train_log.csv";
inline constexpr const char* predictions = "predictions";
inline constexpr const char* seval = "seval.csv";
inline constexpr const char* ceval = "ceval.csv";
inline constexpr const char* walls = "walls.csv";
inline constexpr const char* summary = "summary.txt";
inline constexpr const char* gamma = "gamma.csv";
}  // namespace files

// Each command writes to `out` atomically and echoes the resolved config into it.
void run_gen_data(const RunConfig& cfg, const std::filesystem::path& out);
void run_pretrain(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);
void run_finetune(const RunConfig& cfg, const std::filesystem::path& base_checkpoint, const std::filesystem::path& data,
                  const std::filesystem::path& out);
void run_infer(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& data,
               const std::filesystem::path& out);
// `predictions` is either a predictions/ directory or an infer output directory containing one.
void run_eval(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& predictions,
              const std::filesystem::path& out, bool walls);
void run_sweep_gamma(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                     const std::filesystem::path& out);

// Loads a checkpoint and checks it against the configured architecture.
VelocityNet load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint);

// "error code=<n> kind=<config|data|numeric|internal> message=<text>"
std::string error_line(int code, const std::string& message);

}  // namespace flowedge
