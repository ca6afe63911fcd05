#include "cli.hpp"

int main(int argc, char** argv) { return teleguard::cli::run(argc, argv); }
