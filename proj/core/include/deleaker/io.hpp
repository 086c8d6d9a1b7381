#pragma once

#include "deleaker/config.hpp"
#include "deleaker/masking.hpp"
#include "deleaker/toy_dit.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace deleaker {

// ---------------------------------------------------------------------------
// Trace directories: manifest.txt (key-value text) plus one raw little-endian
// float32 file per (step, block), row-major [heads][N][N], named
// attn_s{step}_b{block}.f32. Hooked runs additionally write
// attn_s{step}_b{block}.post.f32 with the post-intervention scores.

void export_trace(const RunTrace& trace, const EntityLayout& layout, const std::string& dir);

struct ImportedTrace {
    ToyModelConfig config;
    EntityLayout layout;
    bool hooked = false;
    std::vector<std::vector<Mat>> raw;  // [global block][head]
    std::vector<std::vector<Mat>> post; // empty unless hooked
};

ImportedTrace import_trace(const std::string& dir);
TraceView make_trace_view(const ImportedTrace& trace);

// ---------------------------------------------------------------------------
// Mask files: human-readable, lossless round trip.

void save_masks(const EntityMaskSet& masks, const EntityLayout& layout, const std::string& path);
std::pair<EntityMaskSet, std::vector<std::string>> load_masks(const std::string& path);

// ---------------------------------------------------------------------------
// DeLeaker config files: flat "key value" lines with keys alpha, beta1,
// beta2, agg_start_frac, agg_end_frac, int_start_frac, int_end_frac,
// toggles.*, strengthen_direction. Unknown keys are rejected. '#' starts a
// comment.

void save_deleaker_config(const DeleakerConfig& cfg, const std::string& path);
DeleakerConfig load_deleaker_config(const std::string& path);

// ---------------------------------------------------------------------------
// Run manifests: config echo, seeds, and a sha256 digest per output file,
// written as run_manifest.txt inside the output directory. Paths are stored
// relative to the directory so re-runs into different directories compare
// byte-identical.

struct RunManifest {
    std::string tool_version;
    std::string command;
    std::vector<std::pair<std::string, std::string>> fields; // ordered key/value echo
    std::vector<std::string> outputs;                        // relative paths, digested on write
};

void write_run_manifest(const RunManifest& manifest, const std::string& dir);

// Shortest round-trip decimal formatting (std::to_chars).
std::string format_double(double v);
std::string format_float(float v);

} // namespace deleaker
