// Placeholder; the real acceptance suite is added once the pipeline is built.
int main() { return 0; }
