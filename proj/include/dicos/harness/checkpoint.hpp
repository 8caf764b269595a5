#pragma once

#include <filesystem>
#include <memory>

#include "dicos/harness/model.hpp"

namespace dicos::harness {

/// Directory with params.bin, vocab.txt, config.txt and schema.json.
void save_checkpoint(const std::filesystem::path& dir, const Model& model);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& dir);

/// Throws ValidationError naming every slot that differs between the schemas.
void require_same_schema(const corpus::SlotSchema& expected, const corpus::SlotSchema& actual);

}  // namespace dicos::harness
