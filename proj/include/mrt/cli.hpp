#ifndef MRT_CLI_HPP
#define MRT_CLI_HPP

#include <filesystem>
#include <string>

#include "mrt/distill.hpp"
#include "mrt/sampler.hpp"
#include "mrt/synth.hpp"
#include "mrt/train.hpp"

namespace mrt {

// Arguments a subcommand received, echoed into config.resolved.json so a run
// reproduces from that file alone: flags override these, absent flags fall
// back to them. Paths are stored as given (relative paths resolve against the
// invoking directory).
struct RunSection {
    std::string command;  // which subcommand wrote the resolved file
    std::string out;
    std::string data;
    std::string ckpt;
    std::string image;
    std::string layout;
    std::string design;
    std::string pred;
    std::string gt;
    std::string task;     // edit-l2l: l2l-add | l2l-restyle
    std::string caption;
    std::string targets;  // comma-separated 1-based foreground indices
    std::string rect;     // edit-l2l add slot: "x,y,w,h"
    std::string layers = "1..32";    // bench-efficiency layer-count range
    std::string area_dist = "synth"; // bench-efficiency area distribution
};

// Unified configuration document covering every subcommand. Absent fields
// keep these defaults; unknown keys are rejected so typos fail loudly.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SampleConfig sample;
    DistillConfig distill;
    GenParams data;
    int data_count = 8;      // designs per gen-data run / bench bucket
    uint64_t data_seed = 0;  // per-design seeds are hash_mix(data_seed, i)
    RunSection run;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Serializes every field; parse_run_config(run_config_json(c)) round-trips.
std::string run_config_json(const RunConfig& cfg);

// Entry point behind the `mrt` binary, exposed so tests can drive commands
// in-process. Returns the exit code: 0 ok, 2 config error, 3 input error,
// 4 numeric abort. Failures print one-line error JSON to stderr.
int cli_main(int argc, const char* const* argv);

}  // namespace mrt

#endif
