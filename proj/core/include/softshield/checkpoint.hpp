#pragma once

#include <string>

#include "softshield/model.hpp"
#include "softshield/shield.hpp"

namespace softshield {

// All checkpoints are single JSON documents with a fixed key order and f32
// values printed as shortest round-trip decimals, so save -> load -> save
// is byte-identical on one platform.

void save_model(const std::string& path, const Parameters& params);
Parameters load_model(const std::string& path);

void save_soft_prompt(const std::string& path, const SoftPrompt& prompt);
SoftPrompt load_soft_prompt(const std::string& path);

void save_router(const std::string& path, const Router& router);
Router load_router(const std::string& path);

// Shortest decimal string that parses back to exactly this float.
std::string float_repr(float v);

// FNV-1a digest of a file's bytes; 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace softshield
