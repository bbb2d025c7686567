#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("gmethods: command-line driver not wired up yet");
  return 2;
}
