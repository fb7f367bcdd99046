#include "lrtd/cli.hpp"

int main(int argc, char **argv) { return lrtd::cli_main(argc, argv); }
