#include "ssdm/cli.hpp"

int main(int argc, char** argv) { return ssdm::run_command(argc, argv); }
