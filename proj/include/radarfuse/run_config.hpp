#pragma once

// Run configuration: flat "key = value" text with dotted section names.
// Every key has a type and a default; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "radarfuse/comms.hpp"
#include "radarfuse/learning.hpp"
#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"

namespace radarfuse {

class RunConfig {
   public:
    enum class Type { integer, unsigned_integer, real, boolean, text, choice, list };

    struct Entry {
        std::string key;
        Type type;
        std::string value;
        std::vector<std::string> choices;  // for Type::choice
        std::string help;
    };

    RunConfig();

    // Parses and stores one value; config error for unknown keys or values
    // that do not parse as the key's type.
    void set(std::string_view key, std::string_view value);
    const std::string& get(std::string_view key) const;
    bool has(std::string_view key) const;
    const std::vector<Entry>& entries() const { return entries_; }

    // Lines of "key = value"; '#' starts a comment. `origin` names the source
    // in error messages.
    void load_text(std::string_view text, std::string_view origin = "config");
    void load_file(const std::filesystem::path& path);
    // Every key in schema order, loadable by load_text.
    std::string dump() const;

    std::int64_t integer(std::string_view key) const;
    std::uint64_t uinteger(std::string_view key) const;
    double real(std::string_view key) const;
    bool flag(std::string_view key) const;

    std::uint64_t seed() const { return uinteger("seed"); }
    SynthesisConfig synthesis() const;
    ModelConfig model(std::size_t nodes, std::size_t fast_bins, std::size_t window) const;
    // train.augment = auto resolves to `imbalanced`.
    TrainConfig train(bool imbalanced) const;
    HybridLossConfig loss() const;
    std::vector<CompressionScheme> schemes() const;
    std::vector<double> snr_grid() const;
    std::vector<std::uint64_t> sweep_seeds() const;

   private:
    Entry& find(std::string_view key);
    const Entry& find(std::string_view key) const;
    std::vector<Entry> entries_;
};

}  // namespace radarfuse
