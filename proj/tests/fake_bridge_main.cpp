// Stdio fake bridge for client tests: fake_bridge [echo|garbage|short]
#include <unistd.h>

#include <cstring>

#include "fake_bridge.hpp"

int main(int argc, char** argv) {
  fake_bridge::Mode mode = fake_bridge::Mode::kEcho;
  if (argc > 1 && std::strcmp(argv[1], "garbage") == 0) mode = fake_bridge::Mode::kGarbage;
  if (argc > 1 && std::strcmp(argv[1], "short") == 0) mode = fake_bridge::Mode::kShortReply;
  fake_bridge::serve(STDIN_FILENO, STDOUT_FILENO, mode);
  return 0;
}
