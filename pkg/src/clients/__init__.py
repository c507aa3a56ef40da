"""Remote HTTP clients for embedding, perplexity and judge backends."""
