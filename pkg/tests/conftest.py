import pytest

from maskdb import masking


@pytest.fixture(scope="session")
def key():
    """Default key material (GCM for RND)."""
    return masking.derive_key("hunter2", b"\x01\x02\x03\x04\x05\x06\x07\x08")


@pytest.fixture(scope="session")
def key_cbc():
    return masking.derive_key("hunter2", b"\x01\x02\x03\x04\x05\x06\x07\x08", cipher_mode="CBC")


@pytest.fixture(scope="session")
def other_key():
    return masking.derive_key("not-hunter2", b"\x09\x09\x09\x09\x09\x09\x09\x09")
