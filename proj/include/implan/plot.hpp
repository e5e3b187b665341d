#pragma once

#include <filesystem>
#include <string>

namespace implan {

/// Top-view (X-Y) SVG of one loop iteration plus a CSV of the plotted
/// coordinates. kind "endpoints" draws the final arm configuration of every
/// motion; kind "paths" draws the hand trajectories. Motions that intersect
/// the experiment sphere are drawn in the collision class. Output is
/// byte-deterministic for identical inputs.
void cmd_export_plot(const std::filesystem::path& run_dir, int iteration,
                     const std::string& kind, const std::filesystem::path& svg_path,
                     const std::filesystem::path& csv_path);

}  // namespace implan
