#include "dicos/harness/checkpoint.hpp"

#include <fstream>
#include <set>

namespace dicos::harness {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const Model& model) {
    fs::create_directories(dir);
    model.params().save(dir / "params.bin");
    model.vocab().save(dir / "vocab.txt");
    model.config().save(dir / "config.txt");
    std::ofstream(dir / "schema.json") << model.schema().to_json_text() << '\n';
}

std::unique_ptr<Model> load_checkpoint(const fs::path& dir) {
    for (const char* name : {"params.bin", "vocab.txt", "config.txt", "schema.json"}) {
        if (!fs::exists(dir / name)) {
            throw corpus::ValidationError("checkpoint " + dir.string() + " lacks " + name);
        }
    }
    auto model = std::make_unique<Model>(TrainConfig::load(dir / "config.txt"),
                                         corpus::SlotSchema::load(dir / "schema.json"),
                                         encoder::Vocabulary::load(dir / "vocab.txt"));
    model->params().load(dir / "params.bin");
    return model;
}

void require_same_schema(const corpus::SlotSchema& expected, const corpus::SlotSchema& actual) {
    if (expected == actual) return;
    std::set<std::string> differing;
    for (const auto& s : expected.slots()) {
        auto j = actual.index_of(s.name);
        if (!j || actual[*j].candidates != s.candidates || actual[*j].domain != s.domain || *j != s.id) {
            differing.insert(s.name);
        }
    }
    for (const auto& s : actual.slots()) {
        if (!expected.index_of(s.name)) differing.insert(s.name);
    }
    std::string list;
    for (const auto& name : differing) list += (list.empty() ? "" : ", ") + name;
    throw corpus::ValidationError("schema mismatch with checkpoint; differing slots: " + list);
}

}  // namespace dicos::harness
