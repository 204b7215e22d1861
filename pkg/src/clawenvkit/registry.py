"""Service registry: mock-service definitions and route resolution.

Ships a built-in library of services. Four of them (todo, gmail, calendar,
contacts) have purpose-built fixture schemas used by the golden tasks; the
rest are served by the generic CRUD-over-fixture-schema handler. Services
generated at runtime are registered here so subsequent tasks can use them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Endpoint:
    """One POST route of a service, bound to a canonical action name."""

    path: str
    action: str
    required: tuple[str, ...] = ()
    optional: tuple[str, ...] = ()
    description: str = ""
    method: str = "POST"

    @property
    def params(self) -> dict[str, str]:
        out = {p: "required" for p in self.required}
        out.update({p: "optional" for p in self.optional})
        return out


@dataclass
class ServiceSpec:
    """A mock service definition: endpoints, data model, fixture schema."""

    name: str
    real_service: str = ""
    description: str = ""
    endpoints: list[Endpoint] = field(default_factory=list)
    data_model: str = ""
    fixture_schema: dict[str, Any] = field(default_factory=dict)
    live: bool = False

    def actions(self) -> list[str]:
        return [e.action for e in self.endpoints]

    def endpoint_for_action(self, action: str) -> Endpoint | None:
        for ep in self.endpoints:
            if ep.action == action:
                return ep
        return None

    def endpoint_for_path(self, path: str) -> Endpoint | None:
        for ep in self.endpoints:
            if ep.path == path:
                return ep
        return None

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "ServiceSpec":
        endpoints = []
        for ep in doc.get("endpoints", []):
            params = ep.get("params", {})
            if isinstance(params, dict):
                required = tuple(k for k, v in params.items() if str(v).lower() != "optional")
                optional = tuple(k for k, v in params.items() if str(v).lower() == "optional")
            else:
                required, optional = tuple(params or ()), ()
            endpoints.append(Endpoint(
                path=str(ep.get("path", "")),
                action=str(ep.get("name", ep.get("action", ""))),
                required=required,
                optional=optional,
                description=str(ep.get("description", "")),
                method=str(ep.get("method", "POST")).upper(),
            ))
        return cls(
            name=str(doc.get("name", "")),
            real_service=str(doc.get("real_service", "")),
            description=str(doc.get("description", "")),
            endpoints=endpoints,
            data_model=str(doc.get("data_model", "")),
            fixture_schema=dict(doc.get("fixture_schema", {})),
            live=bool(doc.get("live", False)),
        )

    def to_doc(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "real_service": self.real_service,
            "description": self.description,
            "endpoints": [
                {"path": e.path, "name": e.action, "params": e.params, "description": e.description}
                for e in self.endpoints
            ],
            "data_model": self.data_model,
            "fixture_schema": dict(self.fixture_schema),
            "live": self.live,
        }


class ServiceRegistry:
    """Name-unique collection of ServiceSpecs with route resolution."""

    def __init__(self, specs: list[ServiceSpec] | None = None):
        self._specs: dict[str, ServiceSpec] = {}
        for spec in specs or []:
            self.register(spec)

    def register(self, spec: ServiceSpec) -> None:
        if spec.name in self._specs:
            raise ValueError(f"service {spec.name!r} already registered")
        self._specs[spec.name] = spec

    def get(self, name: str) -> ServiceSpec | None:
        return self._specs.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> list[str]:
        return list(self._specs)

    def specs(self) -> list[ServiceSpec]:
        return list(self._specs.values())

    def actions(self, service: str) -> list[str]:
        spec = self.get(service)
        return spec.actions() if spec else []

    def all_actions(self) -> set[str]:
        out: set[str] = set()
        for spec in self._specs.values():
            out.update(spec.actions())
        return out

    def resolve(self, path: str) -> tuple[ServiceSpec, Endpoint] | None:
        """Map a request path to its (service, endpoint), or None."""
        parts = path.strip("/").split("/")
        if not parts or not parts[0]:
            return None
        spec = self.get(parts[0])
        if spec is None:
            return None
        ep = spec.endpoint_for_path(path)
        return (spec, ep) if ep is not None else None


def _crud(service: str, resource: str, *, list_action: str, create_action: str | None = None,
          get_action: str | None = None, update_action: str | None = None,
          delete_action: str | None = None, search_action: str | None = None,
          create_required: tuple[str, ...] = ("title",),
          create_optional: tuple[str, ...] = ()) -> list[Endpoint]:
    """Endpoint set for a conventional CRUD service."""
    base = f"/{service}/{resource}"
    eps = [Endpoint(base, list_action, description=f"List {resource}")]
    if create_action:
        eps.append(Endpoint(f"{base}/create", create_action, create_required, create_optional,
                            f"Create a {resource[:-1] if resource.endswith('s') else resource}"))
    if get_action:
        eps.append(Endpoint(f"{base}/get", get_action, ("id",), (), "Get one record by id"))
    if update_action:
        eps.append(Endpoint(f"{base}/update", update_action, ("id",),
                            create_required + create_optional, "Update a record by id"))
    if delete_action:
        eps.append(Endpoint(f"{base}/delete", delete_action, ("id",), (), "Delete a record by id"))
    if search_action:
        eps.append(Endpoint(f"{base}/search", search_action, ("query",), (), "Search records"))
    return eps


def builtin_registry() -> ServiceRegistry:
    """The built-in mock service library."""
    specs = [
        ServiceSpec(
            name="todo",
            real_service="generic task manager",
            description="Task manager with statuses, priorities, and tags",
            endpoints=[
                Endpoint("/todo/tasks", "list_tasks", (), ("status", "tag"), "List tasks"),
                Endpoint("/todo/tasks/create", "create_task", ("title",),
                         ("priority", "due_date", "status", "tags"), "Create task"),
                Endpoint("/todo/tasks/update", "update_task", ("task_id",),
                         ("title", "priority", "due_date", "status", "tags"), "Update task"),
                Endpoint("/todo/tasks/get", "get_task", ("task_id",), (), "Get task"),
                Endpoint("/todo/tasks/delete", "delete_task", ("task_id",), (), "Delete task"),
            ],
            data_model="tasks: id, title, status, priority, due_date, tags",
            fixture_schema={
                "id_field": "id",
                "fields": {
                    "id": {"type": "string"},
                    "title": {"type": "string"},
                    "status": {"type": "string", "enum": ["open", "in-progress", "completed"]},
                    "priority": {"type": "string", "enum": ["low", "medium", "high"]},
                    "due_date": {"type": "string"},
                    "tags": {"type": "list"},
                },
            },
        ),
        ServiceSpec(
            name="gmail",
            real_service="email",
            description="Email inbox: list, read, send, draft",
            endpoints=[
                Endpoint("/gmail/inbox", "list_inbox", (), ("unread_only",), "List inbox emails"),
                Endpoint("/gmail/send", "send_email", ("to", "subject", "body"), (), "Send an email"),
                Endpoint("/gmail/drafts/create", "create_draft", ("to", "subject"), ("body",),
                         "Create a draft"),
                Endpoint("/gmail/get", "get_email", ("email_id",), (), "Read one email"),
            ],
            data_model="emails: id, from, to, subject, body, unread",
            fixture_schema={
                "id_field": "id",
                "fields": {
                    "id": {"type": "string"},
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "subject": {"type": "string"},
                    "body": {"type": "string"},
                    "unread": {"type": "bool"},
                },
            },
        ),
        ServiceSpec(
            name="calendar",
            real_service="calendar",
            description="Calendar events and scheduling",
            endpoints=[
                Endpoint("/calendar/events", "list_events", (), ("start_date", "days"),
                         "List events"),
                Endpoint("/calendar/events/create", "create_event", ("title", "date"),
                         ("time", "attendees", "location"), "Create event"),
                Endpoint("/calendar/events/get", "get_event", ("event_id",), (), "Get event"),
                Endpoint("/calendar/events/delete", "delete_event", ("event_id",), (),
                         "Delete event"),
            ],
            data_model="events: id, title, date, time, attendees, location",
            fixture_schema={
                "id_field": "id",
                "fields": {
                    "id": {"type": "string"},
                    "title": {"type": "string"},
                    "date": {"type": "string"},
                    "time": {"type": "string"},
                    "attendees": {"type": "list"},
                    "location": {"type": "string"},
                },
            },
        ),
        ServiceSpec(
            name="contacts",
            real_service="contact directory",
            description="Contact directory: search and lookup",
            endpoints=[
                Endpoint("/contacts/search", "search_contacts", ("query",), (), "Search contacts"),
                Endpoint("/contacts/get", "get_contact", ("contact_id",), (), "Get contact"),
                Endpoint("/contacts/list", "list_contacts", (), (), "List contacts"),
                Endpoint("/contacts/create", "create_contact", ("name",), ("email", "company"),
                         "Create contact"),
            ],
            data_model="contacts: id, name, email, company",
            fixture_schema={
                "id_field": "id",
                "fields": {
                    "id": {"type": "string"},
                    "name": {"type": "string"},
                    "email": {"type": "string"},
                    "company": {"type": "string"},
                },
            },
        ),
        # Remaining library services use the generic CRUD handler; their
        # fixture schema is a flat record of string fields.
        ServiceSpec(
            name="notes", description="Notes: create, search, organize",
            endpoints=_crud("notes", "notes", list_action="list_notes",
                            create_action="create_note", get_action="get_note",
                            search_action="search_notes"),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "title": {"type": "string"},
                                                         "body": {"type": "string"}}},
        ),
        ServiceSpec(
            name="crm", description="Customer relationship: accounts, deals",
            endpoints=_crud("crm", "customers", list_action="list_customers",
                            create_action="create_customer", get_action="get_customer",
                            update_action="update_customer", create_required=("name",),
                            create_optional=("stage", "value")),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "name": {"type": "string"},
                                                         "stage": {"type": "string"},
                                                         "value": {"type": "string"}}},
        ),
        ServiceSpec(
            name="finance", description="Financial data: transactions, budgets",
            endpoints=[
                Endpoint("/finance/transactions", "list_transactions", (), ("category",),
                         "List transactions"),
                Endpoint("/finance/transactions/create", "create_transaction",
                         ("amount", "description"), ("category",), "Record a transaction"),
                Endpoint("/finance/transactions/get", "get_transaction", ("id",), (),
                         "Get a transaction"),
                Endpoint("/finance/budget", "get_budget", (), ("category",), "Get budget summary"),
            ],
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "amount": {"type": "string"},
                                                         "description": {"type": "string"},
                                                         "category": {"type": "string"}}},
        ),
        ServiceSpec(
            name="helpdesk", description="Support tickets: triage, resolve",
            endpoints=_crud("helpdesk", "tickets", list_action="list_tickets",
                            create_action="create_ticket", get_action="get_ticket",
                            update_action="update_ticket", create_required=("title",),
                            create_optional=("priority", "status")),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "title": {"type": "string"},
                                                         "priority": {"type": "string"},
                                                         "status": {"type": "string"}}},
        ),
        ServiceSpec(
            name="inventory", description="Product inventory: stock, orders",
            endpoints=_crud("inventory", "products", list_action="list_products",
                            create_action="create_product", get_action="get_product",
                            update_action="update_product", create_required=("name",),
                            create_optional=("stock", "price")),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "name": {"type": "string"},
                                                         "stock": {"type": "string"},
                                                         "price": {"type": "string"}}},
        ),
        ServiceSpec(
            name="kb", description="Knowledge base: articles, search",
            endpoints=[
                Endpoint("/kb/articles", "list_articles", (), (), "List articles"),
                Endpoint("/kb/articles/search", "search_articles", ("query",), (),
                         "Search articles"),
                Endpoint("/kb/articles/get", "get_kb_article", ("id",), (), "Get an article"),
                Endpoint("/kb/articles/create", "create_article", ("title",), ("body",),
                         "Create an article"),
            ],
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "title": {"type": "string"},
                                                         "body": {"type": "string"}}},
        ),
        ServiceSpec(
            name="config", description="System config: integrations, settings",
            endpoints=_crud("config", "integrations", list_action="list_integrations",
                            create_action="create_integration", get_action="get_integration",
                            update_action="update_integration", create_required=("name",),
                            create_optional=("enabled", "settings")),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "name": {"type": "string"},
                                                         "enabled": {"type": "string"}}},
        ),
        ServiceSpec(
            name="scheduler", description="Job scheduler: cron tasks, triggers",
            endpoints=_crud("scheduler", "jobs", list_action="list_jobs",
                            create_action="create_job", get_action="get_job",
                            delete_action="delete_job", create_required=("name", "schedule")),
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "name": {"type": "string"},
                                                         "schedule": {"type": "string"}}},
        ),
        ServiceSpec(
            name="rss", description="RSS feeds: articles, subscriptions",
            endpoints=[
                Endpoint("/rss/feeds", "list_feeds", (), (), "List feeds"),
                Endpoint("/rss/feeds/subscribe", "subscribe_feed", ("url",), (), "Subscribe"),
                Endpoint("/rss/articles", "list_rss_articles", (), ("feed_id",), "List articles"),
                Endpoint("/rss/articles/get", "get_rss_article", ("id",), (), "Get an article"),
            ],
            fixture_schema={"id_field": "id", "fields": {"id": {"type": "string"},
                                                         "title": {"type": "string"},
                                                         "url": {"type": "string"},
                                                         "body": {"type": "string"}}},
        ),
        ServiceSpec(
            name="web", description="Web search and fetch (mock)",
            endpoints=[
                Endpoint("/web/search", "web_search", ("query",), (), "Search the mock web"),
                Endpoint("/web/fetch", "web_fetch", ("url",), (), "Fetch a mock page"),
                Endpoint("/web/history", "list_history", (), (), "List fetch history"),
                Endpoint("/web/text", "get_page_text", ("url",), (), "Extract page text"),
            ],
            fixture_schema={"id_field": "url", "fields": {"url": {"type": "string"},
                                                          "title": {"type": "string"},
                                                          "body": {"type": "string"}}},
        ),
        ServiceSpec(
            name="web_real", description="Live web fetch (real HTTP); gated by --allow-net",
            live=True,
            endpoints=[
                Endpoint("/web_real/search", "web_search", ("query",), (), "Live web search"),
                Endpoint("/web_real/fetch", "web_fetch", ("url",), (), "Live page fetch"),
                Endpoint("/web_real/history", "list_history", (), (), "List fetch history"),
                Endpoint("/web_real/text", "get_page_text", ("url",), (), "Extract page text"),
            ],
            fixture_schema={"id_field": "url", "fields": {"url": {"type": "string"}}},
        ),
    ]
    return ServiceRegistry(specs)
