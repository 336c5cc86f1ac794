#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace clidrv {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string make_temp_dir(const std::string& tag) {
  std::string tmpl = "/tmp/cords_" + tag + "_XXXXXX";
  if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  return tmpl;
}

// Runs the built CLI through the shell; args is the pre-quoted command tail.
// Streams land in workdir so concurrent tests never collide.
inline RunResult run_cli(const std::string& args, const std::string& workdir) {
  const std::string out_path = workdir + "/cli_stdout.txt";
  const std::string err_path = workdir + "/cli_stderr.txt";
  const std::string cmd =
      std::string(CORDS_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult res;
  if (status != -1 && WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

}  // namespace clidrv
