#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "settings.hpp"

namespace modal::cli {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  int jobs = 1;
};

int cmd_synth(const Settings& s, int jobs, const std::string& out_dir, std::ostream& out);
int cmd_targets(const Settings& s, int jobs, const std::string& data, const std::string& out_dir,
                bool dense, std::ostream& out);
int cmd_train_mem(const Settings& s, const std::string& data, const std::string& out_dir,
                  std::ostream& out);
/// `temporal` selects track (tracker ids) over infer (per-sweep ids).
int cmd_infer(const Settings& s, int jobs, const std::string& data, const std::string& out_dir,
              bool temporal, std::ostream& out);
int cmd_eval(int jobs, const std::string& gt, const std::string& pred, const std::string& out_dir,
             std::ostream& out);
int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir,
               std::ostream& out);

}  // namespace modal::cli
