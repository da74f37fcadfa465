#include "cli.hpp"

int main(int argc, char** argv) { return softshield::cli::run(argc, argv); }
