#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "norface/errors.hpp"

namespace norface {

enum class TaskKind { AuDetect, AuIntensity, Fer };

/// Which head/loss/metric triple is active.
struct TaskSpec {
    TaskKind kind = TaskKind::Fer;
    std::size_t n_labels = 7;
    double intensity_scale_max = 5.0; // AU intensity only

    static TaskSpec au_detect() { return {TaskKind::AuDetect, 12, 5.0}; }
    static TaskSpec au_intensity() { return {TaskKind::AuIntensity, 5, 5.0}; }
    static TaskSpec fer() { return {TaskKind::Fer, 7, 5.0}; }

    std::string name() const {
        switch (kind) {
            case TaskKind::AuDetect: return "au-detect";
            case TaskKind::AuIntensity: return "au-intensity";
            case TaskKind::Fer: return "fer";
        }
        return "unknown";
    }

    static TaskSpec from_name(const std::string& name) {
        if (name == "au-detect") return au_detect();
        if (name == "au-intensity") return au_intensity();
        if (name == "fer") return fer();
        throw ConfigurationError("unknown task '" + name + "' (expected au-detect, au-intensity or fer)");
    }
};

/// Ground-truth annotation of one sample. AU detection stores 12 bits, AU
/// intensity stores 5 levels in [0, 5], FER stores a single class index.
struct Label {
    TaskKind kind = TaskKind::Fer;
    std::vector<double> values;

    std::size_t fer_class() const {
        if (kind != TaskKind::Fer || values.size() != 1)
            throw ConfigurationError("label: fer_class() on a non-FER label");
        return static_cast<std::size_t>(values[0]);
    }
};

} // namespace norface
