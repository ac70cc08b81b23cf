#include "refertok/cli.hpp"

int main(int argc, char** argv) { return refertok::run_cli(argc, argv); }
