"""Accounts, bearer tokens, and the role/action permission matrix.

Three user classes: administrators operate the portal, power users build and
publish applications, end users configure and submit ready-made ones.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import (
    AccountDisabled,
    Forbidden,
    InvalidCredentials,
    NotFound,
    TokenExpired,
)
from ..model import is_identifier
from ..repository import Caller

ROLES = ("admin", "power_user", "end_user")

ACTIONS = (
    "create_graph", "edit_workflow", "publish", "submit",
    "monitor_own", "monitor_any", "abort_own", "abort_any",
    "resubmit", "manage_users", "manage_backends",
)

# Own-scoped actions escalate to their any-scoped variant when the caller is
# not the resource owner; actions without a variant are admin-only then.
ANY_VARIANT = {"monitor_own": "monitor_any", "abort_own": "abort_any"}

PERMISSIONS: dict[str, frozenset[str]] = {
    "admin": frozenset(ACTIONS),
    "power_user": frozenset({
        "create_graph", "edit_workflow", "publish", "submit",
        "monitor_own", "abort_own", "resubmit",
    }),
    "end_user": frozenset({"submit", "monitor_own", "abort_own", "resubmit"}),
}

_PBKDF_ITERATIONS = 20_000


def hash_password(password: str, salt: Optional[bytes] = None) -> str:
    salt = salt if salt is not None else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF_ITERATIONS)
    return f"{salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        salt_hex, digest_hex = stored.split("$", 1)
    except ValueError:
        return False
    candidate = hashlib.pbkdf2_hmac("sha256", password.encode(), bytes.fromhex(salt_hex), _PBKDF_ITERATIONS)
    return hmac.compare_digest(candidate.hex(), digest_hex)


@dataclass
class UserAccount:
    username: str
    password_hash: str
    role: str
    created_at: float
    active: bool = True

    def to_json(self) -> dict:
        return {
            "username": self.username, "password_hash": self.password_hash,
            "role": self.role, "created_at": self.created_at, "active": self.active,
        }


@dataclass
class SessionToken:
    token: str
    username: str
    role: str
    expires_at: float

    @property
    def caller(self) -> Caller:
        return Caller(username=self.username, role=self.role)


class UserStore:
    """Accounts persisted as ``users.json`` under the store root."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._users: dict[str, UserAccount] = {}
        if self.path.exists():
            for doc in json.loads(self.path.read_text()):
                self._users[doc["username"]] = UserAccount(**doc)

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps([u.to_json() for u in self._users.values()], indent=1))
        os.replace(tmp, self.path)

    def bootstrap_admin(self, password: str) -> None:
        with self._lock:
            if "admin" not in self._users:
                self._users["admin"] = UserAccount(
                    username="admin", password_hash=hash_password(password),
                    role="admin", created_at=time.time(),
                )
                self._save()

    def create_user(self, username: str, password: str, role: str) -> UserAccount:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if not is_identifier(username):
            raise ValueError(f"username {username!r} violates the identifier grammar")
        with self._lock:
            if username in self._users:
                raise ValueError(f"username {username!r} taken")
            account = UserAccount(
                username=username, password_hash=hash_password(password),
                role=role, created_at=time.time(),
            )
            self._users[username] = account
            self._save()
            return account

    def set_active(self, username: str, active: bool) -> None:
        with self._lock:
            user = self._users.get(username)
            if user is None:
                raise NotFound(f"no user {username!r}")
            user.active = active
            self._save()

    def get(self, username: str) -> Optional[UserAccount]:
        with self._lock:
            return self._users.get(username)

    def list_users(self) -> list[UserAccount]:
        with self._lock:
            return sorted(self._users.values(), key=lambda u: u.username)


class TokenStore:
    """In-memory bearer tokens with TTL; revocation is deletion."""

    def __init__(self, ttl_s: float = 3600.0, clock=time.time):
        self.ttl_s = ttl_s
        self.clock = clock
        self._tokens: dict[str, SessionToken] = {}
        self._lock = threading.Lock()

    def issue(self, user: UserAccount) -> SessionToken:
        token = SessionToken(
            token=secrets.token_hex(20), username=user.username,
            role=user.role, expires_at=self.clock() + self.ttl_s,
        )
        with self._lock:
            self._tokens[token.token] = token
        return token

    def validate(self, token: Optional[str]) -> SessionToken:
        if not token:
            raise TokenExpired("missing bearer token")
        with self._lock:
            session = self._tokens.get(token)
            if session is None:
                raise TokenExpired("unknown or revoked token")
            if session.expires_at <= self.clock():
                del self._tokens[token]
                raise TokenExpired("token expired")
            return session

    def revoke(self, token: str) -> None:
        with self._lock:
            self._tokens.pop(token, None)


class AuthService:
    def __init__(self, users: UserStore, tokens: TokenStore):
        self.users = users
        self.tokens = tokens

    def authenticate(self, username: str, password: str) -> SessionToken:
        user = self.users.get(username)
        # Hash comparison runs regardless so failures take constant time.
        stored = user.password_hash if user else hash_password("", b"\x00" * 16)
        ok = verify_password(password, stored)
        if user is None or not ok:
            raise InvalidCredentials("bad username or password")
        if not user.active:
            raise AccountDisabled(f"account {username!r} is disabled")
        return self.tokens.issue(user)

    def authorize(self, session: SessionToken, action: str, resource_owner: Optional[str] = None) -> None:
        """Permission-matrix decision plus the ownership rule.

        Own-scoped actions on somebody else's resource require the any-scoped
        variant, which only administrators hold.
        """
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        effective = action
        if resource_owner is not None and resource_owner != session.username:
            if action in ANY_VARIANT:
                effective = ANY_VARIANT[action]
            elif session.role != "admin":
                raise Forbidden(
                    f"{action} on another user's resource needs an admin",
                    action=action,
                )
        if effective not in PERMISSIONS[session.role]:
            raise Forbidden(f"role {session.role!r} is not allowed to {effective}", action=effective)
