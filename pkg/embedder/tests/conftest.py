import pytest
import torch

WORDS = ["the", "cat", "dog", "runs", "fast", "slow", "question", "answer",
         "music", "water", "light", "house"]
VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghijklmnopqrstuvwxyz")
    + ["##" + c for c in "abcdefghijklmnopqrstuvwxyz0123456789"]
    + list("0123456789")
    + WORDS
)


def _write_wordpiece(dirpath):
    from transformers import BertTokenizer

    (dirpath / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    BertTokenizer(str(dirpath / "vocab.txt")).save_pretrained(dirpath)


@pytest.fixture(scope="session")
def bert_checkpoint(tmp_path_factory):
    """Randomly initialized 2-layer encoder saved as a local checkpoint."""
    from transformers import BertConfig, BertModel

    path = tmp_path_factory.mktemp("tiny-bert")
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    _write_wordpiece(path)
    return str(path)


@pytest.fixture(scope="session")
def gpt2_checkpoint(tmp_path_factory):
    """Randomly initialized 2-layer causal model (wordpiece tokenizer)."""
    from transformers import GPT2Config, GPT2Model

    path = tmp_path_factory.mktemp("tiny-gpt2")
    torch.manual_seed(1)
    config = GPT2Config(
        vocab_size=len(VOCAB), n_embd=32, n_layer=2, n_head=2,
        n_positions=64, bos_token_id=0, eos_token_id=0,
    )
    GPT2Model(config).save_pretrained(path)
    _write_wordpiece(path)
    return str(path)


@pytest.fixture(scope="session")
def t5_checkpoint(tmp_path_factory):
    """Randomly initialized 2-layer encoder-decoder (wordpiece tokenizer)."""
    from transformers import T5Config, T5Model

    path = tmp_path_factory.mktemp("tiny-t5")
    torch.manual_seed(2)
    config = T5Config(
        vocab_size=len(VOCAB), d_model=32, num_layers=2,
        num_decoder_layers=2, num_heads=2, d_ff=64, d_kv=16,
    )
    T5Model(config).save_pretrained(path)
    _write_wordpiece(path)
    return str(path)


@pytest.fixture
def corpus_tsv(tmp_path):
    """Small id<TAB>text corpus file."""
    import itertools

    rows = []
    for i, combo in enumerate(itertools.product(WORDS, WORDS)):
        if i >= 30:
            break
        rows.append(f"doc{i:03d}\t{' '.join(combo)}")
    path = tmp_path / "corpus.tsv"
    path.write_text("\n".join(rows) + "\n")
    return str(path)
