#pragma once

#include <string>

#include "adattn/model.h"

namespace adattn {

// Versioned binary checkpoint: config header, vocabulary, frozen embedding
// table and the flat name -> (shape, float64 payload) parameter map, all
// little-endian.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace adattn
